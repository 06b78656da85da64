#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wsaflow/errors.hpp"

namespace wsaflow {

// Architecture knobs for the coarse-to-fine network. The desk preset targets
// CPU-scale clouds (hundreds of points); tiny exists for finite-difference
// checks where every forward pass is evaluated thousands of times.
struct ModelConfig {
    std::vector<double> ratios{1.0, 1.0 / 4, 1.0 / 16, 1.0 / 32, 1.0 / 128};
    std::vector<int> feat_channels{32, 64, 96, 128, 160};

    int k_setconv = 16;
    int k_cv_target = 16;   // stage-1 target patch size
    int k_cv_dilated = 8;   // stage-2 neighborhood after dilation
    int cv_dilation = 2;    // stride over the 2x window; 1 = plain patch-to-patch
    int k_up = 8;           // coarse neighbors per fine point when upsampling
    int k_dd = 8;           // deformation-degree neighborhood (self included)

    int cv_channels = 64;
    int cv_hidden = 64;
    int est_hidden = 64;
    int est_channels = 64;
    int wsa_hidden = 32;
    double leaky_slope = 0.1;

    bool use_dd = true;          // feed deformation degree into the estimator
    bool use_wsa = true;         // one shared weight set; false = per-stream weights
    bool dd_recompute_knn = false;  // re-query neighbors on the warped cloud
    bool dd_euclidean = false;      // scalar distance instead of per-channel offsets

    int levels() const { return int(ratios.size()); }
    int level_size(int n0, int l) const {
        return std::max(1, int(std::lround(n0 * ratios[size_t(l)])));
    }
    int dd_width() const { return k_dd * (dd_euclidean ? 1 : 3); }
    int estimator_in_channels(int l) const {
        return feat_channels[size_t(l)] + cv_channels + dd_width() + est_channels + 3;
    }

    void validate(int n0) const {
        if (ratios.empty() || ratios[0] != 1.0)
            throw ConfigError("model: ratios must start at 1");
        for (size_t i = 1; i < ratios.size(); ++i)
            if (ratios[i] >= ratios[i - 1] || ratios[i] <= 0)
                throw ConfigError("model: ratios must be strictly decreasing and positive");
        if (feat_channels.size() != ratios.size())
            throw ConfigError("model: one channel width per level required");
        if (level_size(n0, levels() - 1) < 2)
            throw ConfigError("model: input of " + std::to_string(n0) +
                              " points leaves fewer than 2 at the coarsest level");
    }

    static ModelConfig desk() { return ModelConfig{}; }

    static ModelConfig tiny() {
        ModelConfig c;
        c.ratios = {1.0, 0.25};
        c.feat_channels = {6, 8};
        c.k_setconv = 4;
        c.k_cv_target = 4;
        c.k_cv_dilated = 4;
        c.cv_dilation = 2;
        c.k_up = 4;
        c.k_dd = 4;
        c.cv_channels = 6;
        c.cv_hidden = 6;
        c.est_hidden = 8;
        c.est_channels = 6;
        c.wsa_hidden = 6;
        return c;
    }

    static ModelConfig preset(const std::string& name) {
        if (name == "desk") return desk();
        if (name == "tiny") return tiny();
        throw ConfigError("unknown model preset: " + name);
    }
};

}  // namespace wsaflow
