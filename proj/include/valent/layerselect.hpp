#pragma once

#include <functional>
#include <string>
#include <vector>

#include "valent/pooling.hpp"

namespace valent {

// scores[layer][task], higher better. Layers run 1..L (row 0 = layer 1).
struct LayerScoreMatrix {
    std::vector<std::string> task_names;
    std::vector<std::vector<double>> scores;

    size_t n_layers() const { return scores.size(); }
    size_t n_tasks() const { return task_names.size(); }
    void validate() const;
};

struct SelectionPolicy {
    size_t anchor_task = 0;      // index into task_names (the retrieval task)
    double delta = 2.0;          // tolerance below the anchor max, metric points
    size_t min_layers = 3;
    size_t max_layers = 8;
    double veto_fraction = 0.1;  // bottom fraction per non-anchor task
};

// A dev task scores one embedding function (layer -> per-sentence embeddings
// are produced by the caller). The function receives the single-layer set
// and returns a 0-100 score.
struct DevTask {
    std::string name;
    std::function<double(const LayerSet&)> score;
};

// Evaluate every single-layer set S={l} against every task.
LayerScoreMatrix sweep_layers(size_t n_layers, const std::vector<DevTask>& tasks);

// Threshold-plus-veto policy: keep layers within delta of the anchor max,
// drop layers that sit in the bottom veto_fraction on at least half of the
// non-anchor tasks, then clamp the set size by anchor-score order.
LayerSet select_layers(const LayerScoreMatrix& m, const SelectionPolicy& policy);

// Published per-model defaults, usable without running a sweep.
LayerSet preset_layers(const std::string& name);

} // namespace valent
