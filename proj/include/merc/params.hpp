#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"
#include "merc/matrix.hpp"

namespace merc {

/// Formats a value with 17 significant digits, enough to round-trip any
/// double (and therefore any float) exactly through decimal text.
inline std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Shortest decimal that still round-trips (for human-facing tables).
inline std::string format_shortest(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

template <typename T>
struct ParamEntry {
    Mat<T> value;
    Mat<T> grad;
};

/// Named parameter store. Keys iterate in lexicographic order (std::map),
/// which pins checkpoint bytes and optimizer update order.
template <typename T>
class ParamStore {
  public:
    Mat<T>& create(const std::string& name, int rows, int cols) {
        auto [it, inserted] = entries_.emplace(name, ParamEntry<T>{Mat<T>(rows, cols), Mat<T>(rows, cols)});
        if (!inserted) throw StateError("duplicate parameter " + name);
        return it->second.value;
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    ParamEntry<T>& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw StateError("unknown parameter " + name);
        return it->second;
    }
    const ParamEntry<T>& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw StateError("unknown parameter " + name);
        return it->second;
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    size_t size() const { return entries_.size(); }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& [k, e] : entries_) n += e.value.size();
        return n;
    }

    void zero_grads() {
        for (auto& [k, e] : entries_) e.grad.set_zero();
    }

    /// Squared L2 norm of all parameter values (the theta-norm of the
    /// regularization term). Accumulated in double regardless of T.
    double l2_sq() const {
        double s = 0;
        for (const auto& [k, e] : entries_)
            for (size_t i = 0; i < e.value.size(); ++i) {
                double v = static_cast<double>(e.value.data()[i]);
                s += v * v;
            }
        return s;
    }

    std::string to_checkpoint_text() const {
        std::ostringstream os;
        os << "{";
        bool first = true;
        for (const auto& [name, e] : entries_) {
            os << (first ? "\n" : ",\n");
            first = false;
            os << "  \"" << name << "\": {\"shape\": [" << e.value.rows() << ", " << e.value.cols()
               << "], \"data\": [";
            for (size_t i = 0; i < e.value.size(); ++i) {
                if (i) os << ", ";
                os << format_g17(static_cast<double>(e.value.data()[i]));
            }
            os << "]}";
        }
        os << "\n}\n";
        return os.str();
    }

    void save_checkpoint(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot open checkpoint for writing: " + path);
        f << to_checkpoint_text();
        if (!f) throw DataError("failed writing checkpoint: " + path);
    }

    static ParamStore load_checkpoint(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot open checkpoint: " + path);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("malformed checkpoint " + path + ": " + e.what());
        }
        if (!doc.is_object()) throw DataError("checkpoint root must be an object: " + path);
        ParamStore ps;
        for (auto it = doc.begin(); it != doc.end(); ++it) {
            const auto& v = it.value();
            if (!v.contains("shape") || !v.contains("data"))
                throw DataError("checkpoint entry " + it.key() + " missing shape/data");
            int r = v["shape"].at(0).get<int>();
            int c = v["shape"].at(1).get<int>();
            Mat<T>& m = ps.create(it.key(), r, c);
            const auto& data = v["data"];
            if (data.size() != m.size())
                throw DataError("checkpoint entry " + it.key() + " has " + std::to_string(data.size()) +
                                " values for shape " + m.shape_str());
            for (size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(data[i].get<double>());
        }
        return ps;
    }

  private:
    std::map<std::string, ParamEntry<T>> entries_;
};

}  // namespace merc
