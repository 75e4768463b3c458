#include "valent/layerselect.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace valent {

void LayerScoreMatrix::validate() const {
    require(!scores.empty() && !task_names.empty(), ErrorKind::input,
            "layer score matrix is empty");
    for (const auto& row : scores) {
        require(row.size() == task_names.size(), ErrorKind::shape,
                "layer score matrix is not rectangular");
        for (double v : row)
            require(std::isfinite(v), ErrorKind::input, "layer score matrix has non-finite entry");
    }
}

LayerScoreMatrix sweep_layers(size_t n_layers, const std::vector<DevTask>& tasks) {
    require(n_layers >= 1, ErrorKind::input, "sweep_layers: no layers");
    require(!tasks.empty(), ErrorKind::input, "sweep_layers: no tasks");
    LayerScoreMatrix m;
    for (const auto& t : tasks) m.task_names.push_back(t.name);
    m.scores.resize(n_layers);
    for (size_t l = 1; l <= n_layers; ++l) {
        LayerSet single = LayerSet::explicit_({l});
        for (const auto& t : tasks) m.scores[l - 1].push_back(t.score(single));
    }
    m.validate();
    return m;
}

LayerSet select_layers(const LayerScoreMatrix& m, const SelectionPolicy& policy) {
    m.validate();
    size_t L = m.n_layers();
    require(policy.anchor_task < m.n_tasks(), ErrorKind::input,
            "anchor task index out of range");
    require(policy.delta >= 0.0, ErrorKind::input, "delta must be >= 0");
    require(policy.min_layers >= 1 && policy.min_layers <= policy.max_layers &&
                policy.max_layers <= L,
            ErrorKind::input, "selection policy layer bounds invalid");

    auto anchor = [&](size_t l) { return m.scores[l - 1][policy.anchor_task]; };

    double max_anchor = anchor(1);
    for (size_t l = 2; l <= L; ++l) max_anchor = std::max(max_anchor, anchor(l));

    // candidate set: within delta of the anchor max
    std::vector<size_t> candidates;
    for (size_t l = 1; l <= L; ++l)
        if (anchor(l) >= max_anchor - policy.delta) candidates.push_back(l);

    // veto: bottom veto_fraction per non-anchor task, counted per layer
    size_t bottom_count =
        std::max<size_t>(1, static_cast<size_t>(std::floor(policy.veto_fraction * L + 1e-9)));
    std::vector<size_t> veto_hits(L + 1, 0);
    size_t non_anchor_tasks = 0;
    if (policy.veto_fraction > 0.0) {
        for (size_t t = 0; t < m.n_tasks(); ++t) {
            if (t == policy.anchor_task) continue;
            ++non_anchor_tasks;
            std::vector<size_t> order(L);
            for (size_t l = 1; l <= L; ++l) order[l - 1] = l;
            std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
                return m.scores[a - 1][t] < m.scores[b - 1][t];
            });
            for (size_t i = 0; i < bottom_count; ++i) ++veto_hits[order[i]];
        }
    }
    std::vector<size_t> kept;
    for (size_t l : candidates) {
        bool vetoed = non_anchor_tasks > 0 && 2 * veto_hits[l] >= non_anchor_tasks;
        if (!vetoed) kept.push_back(l);
    }
    require(!kept.empty(), ErrorKind::input,
            "layer selection empty after veto; try a larger delta");

    // clamp to [min_layers, max_layers] by anchor score, ties by lower index
    auto by_anchor = [&](size_t a, size_t b) {
        if (anchor(a) != anchor(b)) return anchor(a) > anchor(b);
        return a < b;
    };
    if (kept.size() > policy.max_layers) {
        std::sort(kept.begin(), kept.end(), by_anchor);
        kept.resize(policy.max_layers);
    } else if (kept.size() < policy.min_layers) {
        std::set<size_t> have(kept.begin(), kept.end());
        std::vector<size_t> rest;
        for (size_t l = 1; l <= L; ++l)
            if (!have.count(l)) rest.push_back(l);
        std::sort(rest.begin(), rest.end(), by_anchor);
        for (size_t l : rest) {
            if (kept.size() >= policy.min_layers) break;
            kept.push_back(l);
        }
    }
    std::sort(kept.begin(), kept.end());
    return LayerSet::explicit_(kept);
}

LayerSet preset_layers(const std::string& name) {
    if (name == "llama2_7b")
        return LayerSet::explicit_({20, 21, 22, 23, 24, 25, 26, 27});
    if (name == "qwen3_8b")
        return LayerSet::explicit_({26, 27, 29, 30, 31});
    raise(ErrorKind::spec, "unknown layer preset: " + name);
}

} // namespace valent
