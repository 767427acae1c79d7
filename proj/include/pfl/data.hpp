#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pfl {

struct Example {
    std::vector<double> x; // features in [0,1]
    int y = 0;
};

struct Dataset {
    std::vector<Example> examples;
    int num_classes = 0;

    size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
    int dim() const { return examples.empty() ? 0 : static_cast<int>(examples[0].x.size()); }

    void validate() const;
};

/// Backdoor trigger: pattern delta, binary mask m, target label. Embedding
/// depends only on delta ⊙ m; off-mask delta coordinates are dead weight.
struct TriggerSpec {
    std::vector<double> delta; // in [0,1]^d
    std::vector<double> mask;  // strictly 0 or 1
    int target = 0;

    void validate() const;
    std::vector<int> mask_coords() const;
};

Dataset gen_synthetic(int num_classes, int dim, int n_per_class, double spread, uint64_t seed);

/// Column scaling constants captured during ingestion, echoed in reports.
struct TableScaling {
    std::vector<std::string> feature_columns;
    std::string label_column;
    std::vector<double> col_min, col_max;
    std::vector<std::string> label_names; // index = class id
};

struct TableSchema {
    std::string label_column;
    // empty = every non-label column is a feature, in header order
    std::vector<std::string> feature_columns;
};

std::pair<Dataset, TableScaling> load_table(const std::string& path, const TableSchema& schema);
void save_table(const std::string& path, const Dataset& data);

std::vector<Dataset> dirichlet_partition(const Dataset& data, int n_clients, double alpha, uint64_t seed);

std::vector<double> embed_trigger(const std::vector<double>& x, const TriggerSpec& t);

/// Seed-deterministic choice of round(rate*n) examples to poison; returned
/// index lists are ascending. Shared by split_poison and the round engine,
/// which re-embeds the clean originals with the current trigger.
std::pair<std::vector<size_t>, std::vector<size_t>> split_poison_indices(const Dataset& data, double rate,
                                                                         uint64_t seed);

/// D_mal: selected examples trigger-embedded and relabeled to the target
/// (dirty label); D_nor: the untouched remainder.
std::pair<Dataset, Dataset> split_poison(const Dataset& data, double rate, const TriggerSpec& trigger,
                                         uint64_t seed);

Dataset embed_all(const Dataset& clean, const TriggerSpec& trigger, bool relabel_to_target);

/// Stratified train/test indices; both sides are non-empty whenever the
/// client has at least two examples.
std::pair<std::vector<size_t>, std::vector<size_t>> stratified_split(const Dataset& data, double test_fraction,
                                                                     uint64_t seed);

Dataset subset(const Dataset& data, const std::vector<size_t>& idx);
Dataset concat(const Dataset& a, const Dataset& b);

} // namespace pfl
