#include "pfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

void Dataset::validate() const {
    if (num_classes < 2) throw DimensionError("dataset needs at least 2 classes");
    const int d = dim();
    for (const auto& e : examples) {
        if (static_cast<int>(e.x.size()) != d) throw DimensionError("ragged feature vectors in dataset");
        if (e.y < 0 || e.y >= num_classes) throw IndexError("label out of range in dataset");
        for (double v : e.x)
            if (v < 0.0 || v > 1.0) throw NumericError("feature outside [0,1] in dataset");
    }
}

void TriggerSpec::validate() const {
    if (delta.size() != mask.size()) throw DimensionError("trigger delta/mask length mismatch");
    for (double m : mask)
        if (m != 0.0 && m != 1.0) throw NumericError("trigger mask must be strictly binary");
    for (size_t i = 0; i < delta.size(); ++i)
        if (mask[i] == 1.0 && (delta[i] < 0.0 || delta[i] > 1.0))
            throw NumericError("trigger delta outside [0,1] on a masked coordinate");
}

std::vector<int> TriggerSpec::mask_coords() const {
    std::vector<int> c;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == 1.0) c.push_back(static_cast<int>(i));
    return c;
}

Dataset gen_synthetic(int num_classes, int dim, int n_per_class, double spread, uint64_t seed) {
    if (num_classes < 2 || dim < 1 || n_per_class < 1) throw std::invalid_argument("gen_synthetic: bad sizes");
    if (spread <= 0.0) throw std::invalid_argument("gen_synthetic: spread must be > 0");
    Rng mean_rng(hash_seed(seed, 0x6d65616e)); // class means
    std::vector<std::vector<double>> means(static_cast<size_t>(num_classes));
    for (auto& m : means) {
        m.resize(static_cast<size_t>(dim));
        for (auto& v : m) v = mean_rng.uniform();
    }
    Dataset ds;
    ds.num_classes = num_classes;
    Rng rng(hash_seed(seed, 0x73616d70)); // samples
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < n_per_class; ++i) {
            Example e;
            e.y = c;
            e.x.resize(static_cast<size_t>(dim));
            for (int j = 0; j < dim; ++j) {
                double v = means[static_cast<size_t>(c)][static_cast<size_t>(j)] + spread * rng.normal();
                e.x[static_cast<size_t>(j)] = std::min(1.0, std::max(0.0, v));
            }
            ds.examples.push_back(std::move(e));
        }
    }
    return ds;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

std::pair<Dataset, TableScaling> load_table(const std::string& path, const TableSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open table file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);

    int label_col = -1;
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == schema.label_column) label_col = static_cast<int>(i);
    if (label_col < 0) throw ParseError(path + ": label column '" + schema.label_column + "' not in header");

    std::vector<int> feature_cols;
    if (schema.feature_columns.empty()) {
        for (size_t i = 0; i < header.size(); ++i)
            if (static_cast<int>(i) != label_col) feature_cols.push_back(static_cast<int>(i));
    } else {
        for (const auto& name : schema.feature_columns) {
            int idx = -1;
            for (size_t i = 0; i < header.size(); ++i)
                if (header[i] == name) idx = static_cast<int>(i);
            if (idx < 0) throw ParseError(path + ": feature column '" + name + "' not in header");
            feature_cols.push_back(idx);
        }
    }
    if (feature_cols.empty()) throw ParseError(path + ": no feature columns");

    std::vector<std::vector<double>> rows;
    std::vector<std::string> raw_labels;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(path + ": line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected " + std::to_string(header.size()));
        std::vector<double> feats;
        feats.reserve(feature_cols.size());
        for (int col : feature_cols) {
            const std::string cell = trim(cells[static_cast<size_t>(col)]);
            try {
                size_t used = 0;
                double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument("trailing junk");
                feats.push_back(v);
            } catch (const std::exception&) {
                throw ParseError(path + ": line " + std::to_string(line_no) + ": non-numeric feature '" +
                                 cell + "' in column '" + header[static_cast<size_t>(col)] + "'");
            }
        }
        rows.push_back(std::move(feats));
        raw_labels.push_back(trim(cells[static_cast<size_t>(label_col)]));
    }
    if (rows.empty()) throw ParseError(path + ": no data rows");

    // labels map to contiguous indices by sorted distinct value
    std::vector<std::string> names = raw_labels;
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    if (names.size() < 2) throw ParseError(path + ": need at least 2 distinct labels");

    TableScaling scaling;
    scaling.label_column = schema.label_column;
    for (int col : feature_cols) scaling.feature_columns.push_back(header[static_cast<size_t>(col)]);
    scaling.label_names = names;
    const size_t d = feature_cols.size();
    scaling.col_min.assign(d, 0.0);
    scaling.col_max.assign(d, 0.0);
    for (size_t j = 0; j < d; ++j) {
        double lo = rows[0][j], hi = rows[0][j];
        for (const auto& r : rows) {
            lo = std::min(lo, r[j]);
            hi = std::max(hi, r[j]);
        }
        scaling.col_min[j] = lo;
        scaling.col_max[j] = hi;
    }

    Dataset ds;
    ds.num_classes = static_cast<int>(names.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        Example e;
        e.x.resize(d);
        for (size_t j = 0; j < d; ++j) {
            const double range = scaling.col_max[j] - scaling.col_min[j];
            // constant column scales to 0.0 by convention
            e.x[j] = range > 0.0 ? (rows[i][j] - scaling.col_min[j]) / range : 0.0;
        }
        e.y = static_cast<int>(std::lower_bound(names.begin(), names.end(), raw_labels[i]) - names.begin());
        ds.examples.push_back(std::move(e));
    }
    return {std::move(ds), std::move(scaling)};
}

void save_table(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write table file: " + path);
    const int d = data.dim();
    for (int j = 0; j < d; ++j) out << "f" << j << ",";
    out << "label\n";
    out.precision(17);
    for (const auto& e : data.examples) {
        for (double v : e.x) out << v << ",";
        out << e.y << "\n";
    }
}

std::vector<Dataset> dirichlet_partition(const Dataset& data, int n_clients, double alpha, uint64_t seed) {
    if (alpha <= 0.0) throw std::invalid_argument("dirichlet_partition: alpha must be > 0");
    if (n_clients < 1) throw std::invalid_argument("dirichlet_partition: need at least one client");

    // per-class index pools, shuffled once from the base seed
    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(data.num_classes));
    for (size_t i = 0; i < data.examples.size(); ++i)
        by_class[static_cast<size_t>(data.examples[i].y)].push_back(i);
    for (int c = 0; c < data.num_classes; ++c) {
        Rng rng(hash_seed(seed, 0x73687566, static_cast<uint64_t>(c)));
        rng.shuffle(by_class[static_cast<size_t>(c)]);
    }

    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::vector<size_t>> assigned(static_cast<size_t>(n_clients));
        for (int c = 0; c < data.num_classes; ++c) {
            const auto& pool = by_class[static_cast<size_t>(c)];
            if (pool.empty()) continue;
            Rng rng(hash_seed(seed, static_cast<uint64_t>(c) * 1000003ull + static_cast<uint64_t>(attempt), 0x64697269));
            std::vector<double> props = rng.dirichlet(alpha, n_clients);
            const size_t n_c = pool.size();

            // largest-remainder quotas; ties go to the lower client id
            std::vector<size_t> quota(static_cast<size_t>(n_clients));
            std::vector<std::pair<double, int>> rem;
            size_t assigned_count = 0;
            for (int k = 0; k < n_clients; ++k) {
                double exact = props[static_cast<size_t>(k)] * static_cast<double>(n_c);
                quota[static_cast<size_t>(k)] = static_cast<size_t>(std::floor(exact));
                assigned_count += quota[static_cast<size_t>(k)];
                rem.emplace_back(exact - std::floor(exact), k);
            }
            std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            size_t leftover = n_c - assigned_count;
            for (size_t r = 0; r < leftover; ++r) quota[static_cast<size_t>(rem[r].second)]++;

            size_t pos = 0;
            for (int k = 0; k < n_clients; ++k) {
                for (size_t q = 0; q < quota[static_cast<size_t>(k)]; ++q)
                    assigned[static_cast<size_t>(k)].push_back(pool[pos++]);
            }
        }
        bool ok = true;
        for (const auto& a : assigned)
            if (a.empty()) ok = false;
        if (!ok) continue;

        std::vector<Dataset> parts(static_cast<size_t>(n_clients));
        for (int k = 0; k < n_clients; ++k) {
            std::sort(assigned[static_cast<size_t>(k)].begin(), assigned[static_cast<size_t>(k)].end());
            parts[static_cast<size_t>(k)] = subset(data, assigned[static_cast<size_t>(k)]);
        }
        return parts;
    }
    throw PartitionError("dirichlet_partition: could not give every client an example in 100 attempts");
}

std::vector<double> embed_trigger(const std::vector<double>& x, const TriggerSpec& t) {
    if (x.size() != t.delta.size()) throw DimensionError("embed_trigger: feature length mismatch");
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i)
        out[i] = x[i] * (1.0 - t.mask[i]) + t.delta[i] * t.mask[i];
    return out;
}

std::pair<std::vector<size_t>, std::vector<size_t>> split_poison_indices(const Dataset& data, double rate,
                                                                         uint64_t seed) {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("split_poison: rate must be in [0,1]");
    const size_t n = data.size();
    const size_t k = static_cast<size_t>(std::llround(rate * static_cast<double>(n)));
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    Rng rng(hash_seed(seed, 0x706f6973));
    rng.shuffle(idx);
    std::vector<size_t> mal(idx.begin(), idx.begin() + static_cast<long>(k));
    std::vector<size_t> nor(idx.begin() + static_cast<long>(k), idx.end());
    std::sort(mal.begin(), mal.end());
    std::sort(nor.begin(), nor.end());
    return {std::move(mal), std::move(nor)};
}

Dataset embed_all(const Dataset& clean, const TriggerSpec& trigger, bool relabel_to_target) {
    Dataset out;
    out.num_classes = clean.num_classes;
    out.examples.reserve(clean.size());
    for (const auto& e : clean.examples) {
        Example p;
        p.x = embed_trigger(e.x, trigger);
        p.y = relabel_to_target ? trigger.target : e.y;
        out.examples.push_back(std::move(p));
    }
    return out;
}

std::pair<Dataset, Dataset> split_poison(const Dataset& data, double rate, const TriggerSpec& trigger,
                                         uint64_t seed) {
    auto [mal_idx, nor_idx] = split_poison_indices(data, rate, seed);
    Dataset mal = embed_all(subset(data, mal_idx), trigger, true);
    Dataset nor = subset(data, nor_idx);
    return {std::move(mal), std::move(nor)};
}

std::pair<std::vector<size_t>, std::vector<size_t>> stratified_split(const Dataset& data, double test_fraction,
                                                                     uint64_t seed) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("stratified_split: test fraction must be in [0,1)");
    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(data.num_classes));
    for (size_t i = 0; i < data.examples.size(); ++i)
        by_class[static_cast<size_t>(data.examples[i].y)].push_back(i);

    std::vector<size_t> train, test;
    for (int c = 0; c < data.num_classes; ++c) {
        auto pool = by_class[static_cast<size_t>(c)];
        if (pool.empty()) continue;
        Rng rng(hash_seed(seed, 0x73706c74, static_cast<uint64_t>(c)));
        rng.shuffle(pool);
        size_t n_test = static_cast<size_t>(std::llround(test_fraction * static_cast<double>(pool.size())));
        if (n_test >= pool.size()) n_test = pool.size() - 1;
        for (size_t i = 0; i < pool.size(); ++i)
            (i < n_test ? test : train).push_back(pool[i]);
    }
    // degenerate counts: keep both sides usable when there are >= 2 examples
    if (test.empty() && train.size() >= 2) {
        test.push_back(train.back());
        train.pop_back();
    }
    if (train.empty() && test.size() >= 2) {
        train.push_back(test.back());
        test.pop_back();
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

Dataset subset(const Dataset& data, const std::vector<size_t>& idx) {
    Dataset out;
    out.num_classes = data.num_classes;
    out.examples.reserve(idx.size());
    for (size_t i : idx) {
        if (i >= data.size()) throw IndexError("subset: index out of range");
        out.examples.push_back(data.examples[i]);
    }
    return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.num_classes != b.num_classes && !a.empty() && !b.empty())
        throw DimensionError("concat: class count mismatch");
    Dataset out;
    out.num_classes = std::max(a.num_classes, b.num_classes);
    out.examples = a.examples;
    out.examples.insert(out.examples.end(), b.examples.begin(), b.examples.end());
    return out;
}

} // namespace pfl
