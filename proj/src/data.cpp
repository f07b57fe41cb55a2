#include "couda/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "couda/rng.hpp"

namespace couda {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void parse_error(const std::string& path, int line, const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& path, int line, const std::string& s) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') parse_error(path, line, "bad number '" + s + "'");
    return v;
}

int parse_int(const std::string& path, int line, const std::string& s) {
    char* end = nullptr;
    long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') parse_error(path, line, "bad integer '" + s + "'");
    return static_cast<int>(v);
}

}  // namespace

// ---- generation ----

void ShiftSpec::validate() const {
    if (n_classes < 2) throw std::invalid_argument("ShiftSpec: need at least two classes");
    if (dim < 2) throw std::invalid_argument("ShiftSpec: dim must be at least 2");
    if (per_class < 1) throw std::invalid_argument("ShiftSpec: per_class must be positive");
    if (!(spread > 0.0)) throw std::invalid_argument("ShiftSpec: spread must be positive");
    if (!(scale_factor > 0.0)) throw std::invalid_argument("ShiftSpec: scale factor must be positive");
    if (!translation.empty() && translation.size() != static_cast<std::size_t>(dim))
        throw std::invalid_argument("ShiftSpec: translation must have length dim (" + std::to_string(dim) + ")");
}

DatasetBundle gen_shifted_gaussians(const ShiftSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int k = spec.n_classes;
    const int d = spec.dim;
    const int n = spec.per_class;

    // Cluster means on a circle in the first two coordinates. The circle is
    // centered away from the origin so a rotation (which is about the
    // origin) both turns and displaces the configuration; adjacent means sit
    // 6 spreads apart, keeping the source task linearly separable.
    const double radius = 3.0 * spec.spread / std::sin(std::numbers::pi / k);
    std::vector<std::vector<double>> means(k, std::vector<double>(d, 0.0));
    for (int c = 0; c < k; ++c) {
        const double angle = 2.0 * std::numbers::pi * c / k + std::numbers::pi / 2.0;
        means[c][0] = radius + radius * std::cos(angle);
        means[c][1] = radius * std::sin(angle);
    }

    Rng rng(seed);
    auto draw_split = [&](std::vector<double>& xs, std::vector<int>& ys) {
        for (int c = 0; c < k; ++c) {
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) xs.push_back(means[c][j] + spec.spread * rng.normal());
                ys.push_back(c);
            }
        }
    };

    std::vector<double> sx, tx, ex;
    std::vector<int> sy, ty, ey;
    draw_split(sx, sy);
    draw_split(tx, ty);
    draw_split(ex, ey);

    const double cr = std::cos(spec.rotation), sr = std::sin(spec.rotation);
    auto shift_split = [&](std::vector<double>& xs) {
        const int rows = static_cast<int>(xs.size()) / d;
        for (int i = 0; i < rows; ++i) {
            double* x = &xs[static_cast<std::size_t>(i) * d];
            for (int j = 0; j < d; ++j) {
                if (!spec.translation.empty()) x[j] += spec.translation[j];
                x[j] *= spec.scale_factor;
            }
            const double x0 = x[0], x1 = x[1];
            x[0] = cr * x0 - sr * x1;
            x[1] = sr * x0 + cr * x1;
        }
    };
    shift_split(tx);
    shift_split(ex);

    DatasetBundle b;
    b.k = k;
    b.dim = d;
    b.source_x = Tensor({k * n, d}, std::move(sx));
    b.source_z = sy;
    b.source_y_clean = std::move(sy);
    b.target_x = Tensor({k * n, d}, std::move(tx));
    b.target_test_x = Tensor({k * n, d}, std::move(ex));
    b.target_test_y = std::move(ey);
    b.true_q = Tensor::eye(k);
    b.seed = seed;
    return b;
}

// ---- label noise ----

std::pair<std::vector<int>, Tensor> inject_label_noise(const std::vector<int>& labels, double rho, int k,
                                                       std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("inject_label_noise: need at least two classes");
    if (!(rho >= 0.0 && rho < 1.0))
        throw std::invalid_argument("inject_label_noise: rho must lie in [0, 1)");
    for (int y : labels) {
        if (y < 0 || y >= k)
            throw std::invalid_argument("inject_label_noise: label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(k) + ")");
    }

    Rng rng(seed);
    std::vector<int> noisy = labels;
    for (int& y : noisy) {
        if (rng.uniform() < rho) {
            int other = static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)));
            y = other >= y ? other + 1 : other;  // never the original class
        }
    }

    std::vector<double> q(static_cast<std::size_t>(k) * k, rho / (k - 1));
    for (int i = 0; i < k; ++i) q[static_cast<std::size_t>(i) * k + i] = 1.0 - rho;
    return {std::move(noisy), Tensor({k, k}, std::move(q))};
}

void apply_label_noise(DatasetBundle& bundle, double rho, std::uint64_t seed) {
    auto [noisy, q] = inject_label_noise(bundle.source_y_clean, rho, bundle.k, seed);
    bundle.source_z = std::move(noisy);
    bundle.true_q = std::move(q);
}

// ---- class imbalance ----

void imbalance_subsample(DatasetBundle& bundle, double p_class, std::uint64_t seed) {
    if (!(p_class >= 0.0 && p_class <= 1.0))
        throw std::invalid_argument("imbalance_subsample: p_class must lie in [0, 1]");

    Rng rng(seed);
    std::vector<bool> selected(static_cast<std::size_t>(bundle.k));
    for (int c = 0; c < bundle.k; ++c) selected[c] = rng.uniform() < p_class;

    const int n = bundle.n_source();
    std::vector<bool> keep(static_cast<std::size_t>(n), true);
    for (int c = 0; c < bundle.k; ++c) {
        if (!selected[c]) continue;
        std::vector<int> idx;
        for (int i = 0; i < n; ++i)
            if (bundle.source_y_clean[i] == c) idx.push_back(i);
        if (idx.empty())
            throw std::invalid_argument("imbalance_subsample: class " + std::to_string(c) +
                                        " has no source samples");
        const std::size_t m = (idx.size() + 1) / 2;  // ceil(half)
        // Fisher-Yates; the first m entries are a uniform subsample.
        for (std::size_t i = idx.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
            std::swap(idx[i], idx[j]);
        }
        for (std::size_t i = m; i < idx.size(); ++i) keep[idx[i]] = false;
    }

    std::vector<double> xs;
    std::vector<int> z, y;
    const auto& data = bundle.source_x.data();
    for (int i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        for (int j = 0; j < bundle.dim; ++j) xs.push_back(data[static_cast<std::size_t>(i) * bundle.dim + j]);
        z.push_back(bundle.source_z[i]);
        y.push_back(bundle.source_y_clean[i]);
    }
    bundle.source_x = Tensor({static_cast<int>(z.size()), bundle.dim}, std::move(xs));
    bundle.source_z = std::move(z);
    bundle.source_y_clean = std::move(y);
}

// ---- serialization ----

void save_bundle(const DatasetBundle& bundle, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_bundle: cannot open " + path + " for writing");

    out << "# couda-dataset v1, K=" << bundle.k << ", dim=" << bundle.dim << ", seed=" << bundle.seed << "\n";
    auto write_rows = [&](const char* split, int domain, const Tensor& x, const std::vector<int>* noisy,
                          const std::vector<int>* clean) {
        const auto& d = x.data();
        for (int i = 0; i < x.rows(); ++i) {
            out << split << ',' << domain << ',' << (noisy ? std::to_string((*noisy)[i]) : "-1") << ','
                << (clean ? std::to_string((*clean)[i]) : "-1");
            for (int j = 0; j < x.cols(); ++j) out << ',' << fmt(d[static_cast<std::size_t>(i) * x.cols() + j]);
            out << '\n';
        }
    };
    write_rows("source", 0, bundle.source_x, &bundle.source_z, &bundle.source_y_clean);
    write_rows("target", 1, bundle.target_x, nullptr, nullptr);
    write_rows("target_test", 1, bundle.target_test_x, nullptr, &bundle.target_test_y);

    for (int i = 0; i < bundle.k; ++i) {
        out << "# Q " << i;
        for (int j = 0; j < bundle.k; ++j)
            out << (j == 0 ? " " : ",") << fmt(bundle.true_q.at(i, j));
        out << '\n';
    }
    if (!out) throw std::runtime_error("save_bundle: write to " + path + " failed");
}

DatasetBundle load_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_bundle: cannot open " + path);

    std::string line;
    int lineno = 0;

    if (!std::getline(in, line)) parse_error(path, 1, "empty file");
    ++lineno;
    int k = 0, dim = 0;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "# couda-dataset v1, K=%d, dim=%d, seed=%llu", &k, &dim, &seed) != 3)
        parse_error(path, lineno, "bad header '" + line + "'");
    if (k < 2 || dim < 1) parse_error(path, lineno, "bad K or dim in header");

    DatasetBundle b;
    b.k = k;
    b.dim = dim;
    b.seed = seed;

    std::vector<double> sx, tx, ex;
    std::vector<int> sz, sy, ey;
    std::vector<std::vector<double>> q_rows(static_cast<std::size_t>(k));
    bool q_seen = false;

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line.rfind("# Q ", 0) == 0) {
            std::istringstream is(line.substr(4));
            int row = -1;
            std::string values;
            if (!(is >> row >> values) || row < 0 || row >= k)
                parse_error(path, lineno, "bad Q row '" + line + "'");
            auto fields = split_csv(values);
            if (static_cast<int>(fields.size()) != k)
                parse_error(path, lineno, "Q row has " + std::to_string(fields.size()) + " values, expected " +
                                              std::to_string(k));
            q_rows[row].clear();
            for (const auto& f : fields) q_rows[row].push_back(parse_double(path, lineno, f));
            q_seen = true;
            continue;
        }
        if (line[0] == '#') continue;

        auto fields = split_csv(line);
        if (static_cast<int>(fields.size()) != 4 + dim)
            parse_error(path, lineno, "row has " + std::to_string(fields.size()) + " fields, expected " +
                                          std::to_string(4 + dim));
        const std::string& split = fields[0];
        int noisy = parse_int(path, lineno, fields[2]);
        int clean = parse_int(path, lineno, fields[3]);
        auto check_label = [&](int v, bool allow_missing) {
            if (v == -1 && allow_missing) return;
            if (v < 0 || v >= k) parse_error(path, lineno, "label " + std::to_string(v) + " outside [0, " +
                                                               std::to_string(k) + ")");
        };
        std::vector<double> x(static_cast<std::size_t>(dim));
        for (int j = 0; j < dim; ++j) x[j] = parse_double(path, lineno, fields[4 + j]);

        if (split == "source") {
            check_label(noisy, false);
            check_label(clean, false);
            sz.push_back(noisy);
            sy.push_back(clean);
            sx.insert(sx.end(), x.begin(), x.end());
        } else if (split == "target") {
            check_label(noisy, true);
            check_label(clean, true);
            tx.insert(tx.end(), x.begin(), x.end());
        } else if (split == "target_test") {
            check_label(clean, false);
            ey.push_back(clean);
            ex.insert(ex.end(), x.begin(), x.end());
        } else {
            parse_error(path, lineno, "unknown split '" + split + "'");
        }
    }

    if (sx.empty()) parse_error(path, lineno, "no source rows");
    if (tx.empty()) parse_error(path, lineno, "no target rows");
    if (ex.empty()) parse_error(path, lineno, "no target_test rows");
    if (!q_seen) parse_error(path, lineno, "missing Q block");
    std::vector<double> q;
    for (int i = 0; i < k; ++i) {
        if (q_rows[i].empty()) parse_error(path, lineno, "missing Q row " + std::to_string(i));
        q.insert(q.end(), q_rows[i].begin(), q_rows[i].end());
    }

    const int target_rows = static_cast<int>(tx.size()) / dim;
    b.source_x = Tensor({static_cast<int>(sz.size()), dim}, std::move(sx));
    b.source_z = std::move(sz);
    b.source_y_clean = std::move(sy);
    b.target_x = Tensor({target_rows, dim}, std::move(tx));
    b.target_test_x = Tensor({static_cast<int>(ey.size()), dim}, std::move(ex));
    b.target_test_y = std::move(ey);
    b.true_q = Tensor({k, k}, std::move(q));
    return b;
}

}  // namespace couda
