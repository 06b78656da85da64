#include "wsaflow/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace wsaflow {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, int line) {
    try {
        size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) fail(line, "trailing characters in number '" + v + "'");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "expected a number, got '" + v + "'");
    }
}

long parse_int(const std::string& v, int line) {
    try {
        size_t used = 0;
        const long d = std::stol(v, &used);
        if (used != v.size()) fail(line, "trailing characters in integer '" + v + "'");
        return d;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        fail(line, "expected an integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(line, "expected true/false, got '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& v, int line) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(line, "empty element in list");
        out.push_back(parse_double(item, line));
    }
    if (out.empty()) fail(line, "empty list");
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, int line)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> s = {
        {"scene",
         {
             {"num_points", [](RunConfig& c, const std::string& v, int l) { c.scene.num_points = int(parse_int(v, l)); }},
             {"num_objects", [](RunConfig& c, const std::string& v, int l) { c.scene.num_objects = int(parse_int(v, l)); }},
             {"object_extent", [](RunConfig& c, const std::string& v, int l) { c.scene.object_extent = parse_double(v, l); }},
             {"rot_bound", [](RunConfig& c, const std::string& v, int l) { c.scene.rot_bound = parse_double(v, l); }},
             {"trans_bound", [](RunConfig& c, const std::string& v, int l) { c.scene.trans_bound = parse_double(v, l); }},
             {"background_fraction", [](RunConfig& c, const std::string& v, int l) { c.scene.background_fraction = parse_double(v, l); }},
             {"jitter_sigma", [](RunConfig& c, const std::string& v, int l) { c.scene.jitter_sigma = parse_double(v, l); }},
             {"target_resample", [](RunConfig& c, const std::string& v, int l) { c.scene.target_resample = parse_bool(v, l); }},
             {"seed", [](RunConfig& c, const std::string& v, int l) { c.scene.seed = uint64_t(parse_int(v, l)); }},
         }},
        {"model",
         {
             {"preset", [](RunConfig& c, const std::string& v, int l) {
                  try {
                      // preserve ablation-style switches across a preset swap
                      const bool dd = c.train.model.use_dd, wsa = c.train.model.use_wsa;
                      c.train.model = ModelConfig::preset(v);
                      c.train.model.use_dd = dd;
                      c.train.model.use_wsa = wsa;
                  } catch (const ConfigError& e) {
                      fail(l, e.what());
                  }
              }},
             {"use_dd", [](RunConfig& c, const std::string& v, int l) { c.train.model.use_dd = parse_bool(v, l); }},
             {"use_wsa", [](RunConfig& c, const std::string& v, int l) { c.train.model.use_wsa = parse_bool(v, l); }},
             {"cv_dilation", [](RunConfig& c, const std::string& v, int l) { c.train.model.cv_dilation = int(parse_int(v, l)); }},
             {"dd_recompute_knn", [](RunConfig& c, const std::string& v, int l) { c.train.model.dd_recompute_knn = parse_bool(v, l); }},
             {"dd_euclidean", [](RunConfig& c, const std::string& v, int l) { c.train.model.dd_euclidean = parse_bool(v, l); }},
             {"k_setconv", [](RunConfig& c, const std::string& v, int l) { c.train.model.k_setconv = int(parse_int(v, l)); }},
             {"k_cv_target", [](RunConfig& c, const std::string& v, int l) { c.train.model.k_cv_target = int(parse_int(v, l)); }},
             {"k_cv_dilated", [](RunConfig& c, const std::string& v, int l) { c.train.model.k_cv_dilated = int(parse_int(v, l)); }},
             {"k_up", [](RunConfig& c, const std::string& v, int l) { c.train.model.k_up = int(parse_int(v, l)); }},
             {"k_dd", [](RunConfig& c, const std::string& v, int l) { c.train.model.k_dd = int(parse_int(v, l)); }},
         }},
        {"train",
         {
             {"epochs", [](RunConfig& c, const std::string& v, int l) { c.train.epochs = int(parse_int(v, l)); }},
             {"batch_size", [](RunConfig& c, const std::string& v, int l) { c.train.batch_size = int(parse_int(v, l)); }},
             {"lr", [](RunConfig& c, const std::string& v, int l) { c.train.lr = parse_double(v, l); }},
             {"lr_decay", [](RunConfig& c, const std::string& v, int l) { c.train.lr_decay = parse_double(v, l); }},
             {"lr_decay_period", [](RunConfig& c, const std::string& v, int l) { c.train.lr_decay_period = int(parse_int(v, l)); }},
             {"beta1", [](RunConfig& c, const std::string& v, int l) { c.train.beta1 = parse_double(v, l); }},
             {"beta2", [](RunConfig& c, const std::string& v, int l) { c.train.beta2 = parse_double(v, l); }},
             {"weight_decay", [](RunConfig& c, const std::string& v, int l) { c.train.weight_decay = parse_double(v, l); }},
             {"seed", [](RunConfig& c, const std::string& v, int l) { c.train.seed = uint64_t(parse_int(v, l)); }},
             {"checkpoint_interval", [](RunConfig& c, const std::string& v, int l) { c.train.checkpoint_interval = int(parse_int(v, l)); }},
         }},
        {"loss",
         {
             {"alpha_s", [](RunConfig& c, const std::string& v, int l) { c.train.loss.alpha_s = parse_double(v, l); }},
             {"alpha_p", [](RunConfig& c, const std::string& v, int l) { c.train.loss.alpha_p = parse_double(v, l); }},
             {"alpha_dd", [](RunConfig& c, const std::string& v, int l) { c.train.loss.alpha_dd = parse_double(v, l); }},
             {"gamma", [](RunConfig& c, const std::string& v, int l) { c.train.loss.gamma = parse_double_list(v, l); }},
         }},
    };
    return s;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;

    // apply a model preset first so later keys override it regardless of order
    {
        std::istringstream scan(text);
        std::string ln;
        int n = 0;
        std::string sec;
        while (std::getline(scan, ln)) {
            ++n;
            std::string t = trim(ln.substr(0, ln.find_first_of("#;")));
            if (t.empty()) continue;
            if (t.front() == '[') {
                sec = t;
                continue;
            }
            const size_t eq = t.find('=');
            if (sec == "[model]" && eq != std::string::npos &&
                trim(t.substr(0, eq)) == "preset")
                schema().at("model").at("preset")(cfg, trim(t.substr(eq + 1)), n);
        }
    }

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw.substr(0, raw.find_first_of("#;")));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            section = line.substr(1, line.size() - 2);
            if (!schema().count(section)) fail(line_no, "unknown section [" + section + "]");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) fail(line_no, "key outside any section");
        const auto& keys = schema().at(section);
        auto it = keys.find(key);
        if (it == keys.end()) fail(line_no, "unknown key '" + key + "' in [" + section + "]");
        if (section == "model" && key == "preset") continue;  // already applied
        it->second(cfg, value, line_no);
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string default_config_text() {
    return R"(# wsaflow run configuration

[scene]
num_points = 512
num_objects = 3
object_extent = 0.4
rot_bound = 0.2
trans_bound = 0.25
background_fraction = 0.25
jitter_sigma = 0.0
target_resample = false
seed = 1

[model]
preset = desk            # desk | tiny
use_dd = true
use_wsa = true
cv_dilation = 2          # 1 = plain patch-to-patch
dd_recompute_knn = false
dd_euclidean = false

[train]
epochs = 200
batch_size = 2
lr = 0.001
lr_decay = 0.7
lr_decay_period = 20
beta1 = 0.9
beta2 = 0.99
weight_decay = 0.0001
seed = 1
checkpoint_interval = 0

[loss]
alpha_s = 1.0
alpha_p = 0.3
alpha_dd = 0.3
gamma = 0.02, 0.04, 0.08, 0.16, 0.16
)";
}

}  // namespace wsaflow
