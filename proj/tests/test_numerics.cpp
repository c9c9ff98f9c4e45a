#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "merc/adam.hpp"
#include "merc/gradcheck.hpp"
#include "merc/kernels.hpp"
#include "merc/params.hpp"
#include "merc/rng.hpp"
#include "merc/tape.hpp"
#include "support/fd_check.hpp"

using namespace merc;
using merc::testing::random_mat;

namespace {
struct ThreadGuard {
    explicit ThreadGuard(int n) { kernels::set_max_threads(n); }
    ~ThreadGuard() { kernels::set_max_threads(1); }
};
}  // namespace

TEST_CASE("matmul identity and small product") {
    Mat<double> i2 = Mat<double>::identity(2);
    Mat<double> a(2, 2, {1, 2, 3, 4});
    CHECK(kernels::matmul_nn(i2, a) == a);

    Mat<double> r(1, 2, {1, 2});
    Mat<double> c(2, 1, {3, 4});
    Mat<double> p = kernels::matmul_nn(r, c);
    CHECK(p.rows() == 1);
    CHECK(p.cols() == 1);
    CHECK(p(0, 0) == doctest::Approx(11.0));
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    Mat<double> a(2, 3), b(4, 5);
    CHECK_THROWS_WITH_AS(kernels::matmul_nn(a, b), doctest::Contains("2x3"), ShapeError);
    CHECK_THROWS_WITH_AS(kernels::matmul_nn(a, b), doctest::Contains("4x5"), ShapeError);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    RngStream rng(RngPurpose::datagen, 7);
    // shapes straddle the parallel cutoff on purpose
    for (auto [m, k, n] : {std::tuple{3, 4, 2}, std::tuple{64, 80, 96}, std::tuple{130, 70, 90}}) {
        Mat<double> a = random_mat(m, k, rng);
        Mat<double> b = random_mat(k, n, rng);
        Mat<double> c_ref(m, n), c_omp(m, n);
        kernels::ref::matmul_nn(a, b, c_ref, false);
        kernels::omp::matmul_nn(a, b, c_omp, false);
        CHECK(c_ref == c_omp);

        Mat<double> bt = random_mat(n, k, rng);
        Mat<double> d_ref(m, n), d_omp(m, n);
        kernels::ref::matmul_nt(a, bt, d_ref, false);
        kernels::omp::matmul_nt(a, bt, d_omp, false);
        CHECK(d_ref == d_omp);

        Mat<double> at = random_mat(k, m, rng);
        Mat<double> e_ref(m, n), e_omp(m, n);
        kernels::ref::matmul_tn(at, b, e_ref, false);
        kernels::omp::matmul_tn(at, b, e_omp, false);
        CHECK(e_ref == e_omp);
    }
    // and via the dispatching front door, threads must not change results
    Mat<double> a = random_mat(80, 60, rng);
    Mat<double> b = random_mat(60, 70, rng);
    Mat<double> c1 = kernels::matmul_nn(a, b);
    Mat<double> c2;
    {
        ThreadGuard g(2);
        c2 = kernels::matmul_nn(a, b);
    }
    CHECK(c1 == c2);
}

TEST_CASE("softmax rows: symmetry, closed form, overflow safety") {
    Mat<double> a(1, 3, {1, 1, 1});
    Mat<double> sa = kernels::softmax_rows(a);
    for (int c = 0; c < 3; ++c) CHECK(sa(0, c) == doctest::Approx(1.0 / 3).epsilon(1e-14));

    Mat<double> b(1, 2, {0.0, std::log(3.0)});
    Mat<double> sb = kernels::softmax_rows(b);
    CHECK(sb(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(sb(0, 1) == doctest::Approx(0.75).epsilon(1e-14));

    Mat<double> big(1, 2, {1000.0, 1000.0});
    Mat<double> sbig = kernels::softmax_rows(big);
    CHECK(sbig(0, 0) == 0.5);
    CHECK(sbig(0, 1) == 0.5);

    RngStream rng(RngPurpose::datagen, 3);
    Mat<double> x = random_mat(17, 9, rng, 4.0);
    Mat<double> y = kernels::softmax_rows(x);
    for (int r = 0; r < y.rows(); ++r) {
        double s = 0;
        for (int c = 0; c < y.cols(); ++c) {
            s += y(r, c);
            CHECK(y(r, c) > 0.0);
            CHECK(y(r, c) < 1.0);
        }
        CHECK(std::fabs(s - 1.0) <= 1e-12);
    }

    Mat<double> bad(1, 2, {1.0, std::nan("")});
    CHECK_THROWS_AS(kernels::softmax_rows(bad), NumericError);
}

TEST_CASE("rng streams are deterministic and purpose-separated") {
    RngStream a(RngPurpose::init, 42), b(RngPurpose::init, 42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(RngPurpose::init, 42), d(RngPurpose::dropmessage, 42);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += c.next_u64() == d.next_u64();
    CHECK(same == 0);

    RngStream e(RngPurpose::datagen, 9);
    for (int i = 0; i < 1000; ++i) {
        double u = e.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(e.uniform_int(7) < 7);
    }

    // normal() consumes a fixed number of draws per call
    RngStream f(RngPurpose::datagen, 11), g(RngPurpose::datagen, 11);
    (void)f.normal();
    g.next_u64();
    g.next_u64();
    CHECK(f.next_u64() == g.next_u64());
}

TEST_CASE("param store: lexicographic order, duplicate rejection, checkpoint round-trip") {
    ParamStore<double> ps;
    RngStream rng(RngPurpose::init, 5);
    ps.create("b.weight", 2, 3);
    ps.create("a.bias", 1, 3);
    ps.create("a.weight", 3, 2);
    CHECK_THROWS_AS(ps.create("a.bias", 1, 3), StateError);
    std::vector<std::string> order;
    for (auto& [k, e] : ps) {
        order.push_back(k);
        for (size_t i = 0; i < e.value.size(); ++i) e.value.data()[i] = rng.normal() * std::exp(rng.normal());
    }
    CHECK(order == std::vector<std::string>{"a.bias", "a.weight", "b.weight"});

    const std::string path = (std::filesystem::temp_directory_path() / "merc_ckpt_test.json").string();
    ps.save_checkpoint(path);
    ParamStore<double> loaded = ParamStore<double>::load_checkpoint(path);
    REQUIRE(loaded.size() == ps.size());
    for (auto& [k, e] : ps) {
        const auto& l = loaded.at(k);
        REQUIRE(l.value.same_shape(e.value));
        for (size_t i = 0; i < e.value.size(); ++i) CHECK(l.value.data()[i] == e.value.data()[i]);
    }
    // identical content implies identical bytes
    CHECK(ps.to_checkpoint_text() == loaded.to_checkpoint_text());
    std::filesystem::remove(path);
}

TEST_CASE("adam: zero learning rate is a no-op, positive rate descends a quadratic") {
    ParamStore<double> ps;
    Mat<double>& w = ps.create("w", 2, 2);
    w = Mat<double>(2, 2, {1, -2, 3, -4});
    const Mat<double> before = w;
    Adam<double> frozen(0.0);
    for (int i = 0; i < 3; ++i) {
        for (auto& [k, e] : ps)
            for (size_t j = 0; j < e.grad.size(); ++j) e.grad.data()[j] = 1.0;
        frozen.step(ps);
    }
    CHECK(ps.at("w").value == before);

    Adam<double> opt(0.05);
    double last = 1e100;
    for (int it = 0; it < 200; ++it) {
        auto& e = ps.at("w");
        double loss = 0;
        for (size_t j = 0; j < e.value.size(); ++j) {
            loss += 0.5 * e.value.data()[j] * e.value.data()[j];
            e.grad.data()[j] = e.value.data()[j];
        }
        if (it % 50 == 0) {
            CHECK(loss < last);
            last = loss;
        }
        opt.step(ps);
    }
    for (size_t j = 0; j < ps.at("w").value.size(); ++j) CHECK(std::fabs(ps.at("w").value.data()[j]) < 1e-2);
}

// ---- tape ops against the finite-difference oracle ----

TEST_CASE("matmul gradient: finite differences and the closed form ones*B^T") {
    RngStream rng(RngPurpose::datagen, 21);
    Mat<double> A = random_mat(3, 4, rng);
    Mat<double> B = random_mat(4, 2, rng);
    auto res = merc::testing::compare_grad_to_fd(
        {A, B}, [](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.sum_all(t.matmul(v[0], v[1]));
        });
    CHECK(res.max_rel_err < 1e-6);

    // closed form: d sum(A*B) / dA = ones * B^T
    Mat<double> gA(3, 4);
    {
        Tape<double> t;
        auto a = t.param(&A, &gA);
        auto b = t.input_ref(&B);
        t.backward(t.sum_all(t.matmul(a, b)));
    }
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            double expect = 0;
            for (int j = 0; j < 2; ++j) expect += B(c, j);
            CHECK(gA(r, c) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("elementwise and structural ops match finite differences") {
    RngStream rng(RngPurpose::datagen, 22);
    using V = std::vector<Var<double>>;

    auto check = [&](std::vector<Mat<double>> inputs, merc::testing::ExprBuilder b, double tol = 3e-6) {
        auto res = merc::testing::compare_grad_to_fd(std::move(inputs), b);
        INFO("input ", res.input, " at (", res.row, ",", res.col, "): analytic ", res.analytic, " numeric ",
             res.numeric);
        CHECK(res.max_rel_err < tol);
    };

    check({random_mat(3, 5, rng), random_mat(3, 5, rng)},
          [](Tape<double>& t, const V& v) { return t.sum_all(t.mul(t.add(v[0], v[1]), v[1])); });
    check({random_mat(4, 3, rng)},
          [](Tape<double>& t, const V& v) { return t.sum_all(t.relu(v[0])); });
    check({random_mat(4, 3, rng)},
          [](Tape<double>& t, const V& v) { return t.l2_sq_norm(t.sigmoid(v[0])); });
    check({random_mat(4, 3, rng)},
          [](Tape<double>& t, const V& v) { return t.l2_sq_norm(t.tanh_(v[0])); });
    check({random_mat(2, 6, rng)},
          [](Tape<double>& t, const V& v) { return t.l2_sq_norm(t.softmax_rows(v[0])); });
    check({random_mat(3, 4, rng), random_mat(1, 4, rng)},
          [](Tape<double>& t, const V& v) { return t.l2_sq_norm(t.add_bias(v[0], v[1])); });
    check({random_mat(3, 4, rng)},
          [](Tape<double>& t, const V& v) { return t.sum_all(t.affine(t.transpose(v[0]), -2.5, 0.75)); });
    check({random_mat(3, 2, rng), random_mat(3, 3, rng)}, [](Tape<double>& t, const V& v) {
        return t.l2_sq_norm(t.concat_cols({v[0], v[1], v[0]}));
    });
    check({random_mat(2, 4, rng), random_mat(3, 4, rng)}, [](Tape<double>& t, const V& v) {
        return t.l2_sq_norm(t.concat_rows({v[1], v[0]}));
    });
    check({random_mat(5, 3, rng)}, [](Tape<double>& t, const V& v) {
        return t.l2_sq_norm(t.gather_rows(v[0], {4, 0, 0, 2}));
    });
    check({random_mat(5, 3, rng)},
          [](Tape<double>& t, const V& v) { return t.l2_sq_norm(t.row_select(v[0], 3)); });
    check({random_mat(4, 3, rng)}, [](Tape<double>& t, const V& v) {
        return t.l2_sq_norm(t.row_scale_const(v[0], {0.0, 2.0, 1.0, -0.5}));
    });
    check({random_mat(2, 5, rng)}, [](Tape<double>& t, const V& v) {
        return t.sum_all(t.clamp_min(v[0], 0.25));
    });
    check({random_mat(3, 4, rng)}, [&](Tape<double>& t, const V& v) {
        Mat<double> C(4, 2, {1, 0, 0.5, -1, 2, 0, 0, 3});
        return t.l2_sq_norm(t.matmul_const(v[0], C));
    });
}

TEST_CASE("layer_norm: constant row, closed form, gradient") {
    Mat<double> gain = Mat<double>::full(1, 4, 1.0);
    Mat<double> bias(1, 4);
    {
        Tape<double> t;
        auto x = t.input(Mat<double>::full(1, 4, 3.7));
        auto y = t.layer_norm(x, t.input_ref(&gain), t.input_ref(&bias), 1e-5);
        for (int c = 0; c < 4; ++c) CHECK(t.val(y)(0, c) == doctest::Approx(0.0));
    }
    {
        Tape<double> t;
        auto x = t.input(Mat<double>(1, 2, {1, 3}));
        Mat<double> g2 = Mat<double>::full(1, 2, 1.0), b2(1, 2);
        auto y = t.layer_norm(x, t.input_ref(&g2), t.input_ref(&b2), 1e-12);
        CHECK(t.val(y)(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
        CHECK(t.val(y)(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
    }
    {
        Tape<double> t;
        Mat<double> x(1, 2), g(1, 2), b(1, 2);
        CHECK_THROWS_AS(t.layer_norm(t.input_ref(&x), t.input_ref(&g), t.input_ref(&b), 0.0), ConfigError);
    }
    RngStream rng(RngPurpose::datagen, 23);
    auto res = merc::testing::compare_grad_to_fd(
        {random_mat(2, 5, rng), random_mat(1, 5, rng), random_mat(1, 5, rng)},
        [](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.l2_sq_norm(t.layer_norm(v[0], v[1], v[2], 1e-5));
        });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("cross_entropy_rows: value, gradient, floor") {
    Mat<double> p(2, 3, {0.2, 0.5, 0.3, 0.1, 0.1, 0.8});
    {
        Tape<double> t;
        auto loss = t.cross_entropy_rows(t.input_ref(&p), {1, 2});
        CHECK(t.val(loss)(0, 0) == doctest::Approx(-std::log(0.5) - std::log(0.8)).epsilon(1e-14));
    }
    RngStream rng(RngPurpose::datagen, 24);
    Mat<double> logits = random_mat(3, 4, rng);
    auto res = merc::testing::compare_grad_to_fd(
        {logits}, [](Tape<double>& t, const std::vector<Var<double>>& v) {
            return t.cross_entropy_rows(t.softmax_rows(v[0]), {2, 0, 3});
        });
    CHECK(res.max_rel_err < 1e-6);
    {
        Tape<double> t;
        Mat<double> z(1, 2, {0.0, 1.0});
        auto loss = t.cross_entropy_rows(t.input_ref(&z), {0});
        CHECK(t.val(loss)(0, 0) == doctest::Approx(-std::log(1e-12)));
    }
}

TEST_CASE("backward demands a scalar and runs once") {
    Tape<double> t;
    auto x = t.input(Mat<double>(2, 2, {1, 2, 3, 4}));
    auto y = t.relu(x);
    CHECK_THROWS_AS(t.backward(y), ShapeError);
    auto s = t.sum_all(y);
    CHECK(t.backward(s) == doctest::Approx(10.0));
    CHECK_THROWS_AS(t.backward(s), StateError);
}

// ---- grad_check harness ----

namespace {
struct QuadraticClosure {
    double loss(ParamStore<double>& ps) {
        double s = 0;
        for (auto& [k, e] : ps)
            for (size_t i = 0; i < e.value.size(); ++i) s += 0.5 * e.value.data()[i] * e.value.data()[i];
        return s;
    }
    double loss_and_grad(ParamStore<double>& ps) {
        for (auto& [k, e] : ps)
            for (size_t i = 0; i < e.value.size(); ++i) e.grad.data()[i] += e.value.data()[i];
        return loss(ps);
    }
};

struct FlakyClosure {
    int calls = 0;
    double loss(ParamStore<double>&) { return static_cast<double>(calls++); }
    double loss_and_grad(ParamStore<double>& ps) { return loss(ps); }
};
}  // namespace

TEST_CASE("grad_check: quadratic closed form, bad step, non-determinism") {
    ParamStore<double> ps;
    RngStream rng(RngPurpose::init, 77);
    auto& w = ps.create("w", 3, 3);
    for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();

    QuadraticClosure q;
    auto report = grad_check(q, ps, 1e-6, 1e-6);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-8);
    REQUIRE(report.per_param.size() == 1);
    CHECK(report.per_param[0].name == "w");

    CHECK_THROWS_AS(grad_check(q, ps, 0.0, 1e-6), ConfigError);
    FlakyClosure f;
    CHECK_THROWS_AS(grad_check(f, ps, 1e-6, 1e-6), DeterminismError);
}
