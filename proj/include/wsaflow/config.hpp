#pragma once

#include <string>

#include "wsaflow/datagen.hpp"
#include "wsaflow/trainer.hpp"

namespace wsaflow {

// Everything an end-to-end run needs, parsed from one INI-style file with
// [scene], [model], [train], and [loss] sections. Unknown sections or keys are
// errors, as are values that fail their type check.
struct RunConfig {
    SceneConfig scene;
    TrainConfig train;  // carries ModelConfig and LossWeights
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// A fully commented config with every supported key at its default.
std::string default_config_text();

}  // namespace wsaflow
