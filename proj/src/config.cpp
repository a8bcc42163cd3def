#include "gentron/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

using json = nlohmann::json;

namespace gentron {

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!obj.is_object()) throw ValueError("config: " + where + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ValueError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValueError("config: bad value for '" + std::string(key) + "'");
    }
}

json model_to_json_obj(const GenTronConfig& c) {
    json e;
    e["mode"] = c.encoders.mode == EncoderMode::dual_interleaved ? "dual_interleaved" : "single";
    e["d_texts"] = c.encoders.d_texts;
    e["vocab"] = c.encoders.vocab;
    e["max_len"] = c.encoders.max_len;
    json m;
    m["depth"] = c.depth;
    m["width"] = c.width;
    m["mlp_width"] = c.mlp_width;
    m["patch"] = c.patch;
    m["latent_h"] = c.latent_h;
    m["latent_w"] = c.latent_w;
    m["latent_c"] = c.latent_c;
    m["heads"] = c.heads;
    m["variant"] = variant_name(c.variant);
    m["temporal"] = c.temporal;
    m["t_frames"] = c.t_frames;
    m["encoders"] = std::move(e);
    return m;
}

GenTronConfig model_from_json_obj(const json& m) {
    reject_unknown(m,
                   {"depth", "width", "mlp_width", "patch", "latent_h", "latent_w", "latent_c",
                    "heads", "variant", "temporal", "t_frames", "encoders"},
                   "model");
    GenTronConfig c;
    read_field(m, "depth", c.depth);
    read_field(m, "width", c.width);
    read_field(m, "mlp_width", c.mlp_width);
    read_field(m, "patch", c.patch);
    read_field(m, "latent_h", c.latent_h);
    read_field(m, "latent_w", c.latent_w);
    read_field(m, "latent_c", c.latent_c);
    read_field(m, "heads", c.heads);
    read_field(m, "temporal", c.temporal);
    read_field(m, "t_frames", c.t_frames);
    if (m.contains("variant")) {
        const auto v = m.at("variant").get<std::string>();
        if (v == "adaln_zero")
            c.variant = Variant::adaln_zero;
        else if (v == "cross_attention")
            c.variant = Variant::cross_attention;
        else
            throw ValueError("config: unknown variant '" + v + "'");
    }
    if (m.contains("encoders")) {
        const auto& e = m.at("encoders");
        reject_unknown(e, {"mode", "d_texts", "vocab", "max_len"}, "model.encoders");
        if (e.contains("mode")) {
            const auto mode = e.at("mode").get<std::string>();
            if (mode == "single")
                c.encoders.mode = EncoderMode::single;
            else if (mode == "dual_interleaved")
                c.encoders.mode = EncoderMode::dual_interleaved;
            else
                throw ValueError("config: unknown encoder mode '" + mode + "'");
        }
        read_field(e, "d_texts", c.encoders.d_texts);
        read_field(e, "vocab", c.encoders.vocab);
        read_field(e, "max_len", c.encoders.max_len);
    }
    return c;
}

} // namespace

std::string model_config_to_json(const GenTronConfig& cfg) { return model_to_json_obj(cfg).dump(); }

GenTronConfig model_config_from_json(const std::string& json_text) {
    json m;
    try {
        m = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValueError("config: malformed model JSON: " + std::string(e.what()));
    }
    return model_from_json_obj(m);
}

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValueError("config: malformed JSON: " + std::string(e.what()));
    }
    reject_unknown(
        root, {"seed", "model", "schedule", "train", "guidance", "data", "video_data", "out"},
        "config");

    RunConfig cfg;
    if (root.contains("seed")) cfg.seed = root.at("seed").get<uint64_t>();
    if (root.contains("model")) cfg.model = model_from_json_obj(root.at("model"));
    if (root.contains("schedule")) {
        const auto& s = root.at("schedule");
        reject_unknown(s, {"timesteps", "beta_start", "beta_end"}, "schedule");
        read_field(s, "timesteps", cfg.schedule.timesteps);
        read_field(s, "beta_start", cfg.schedule.beta_start);
        read_field(s, "beta_end", cfg.schedule.beta_end);
    }
    if (root.contains("train")) {
        const auto& t = root.at("train");
        reject_unknown(t,
                       {"lr", "beta1", "beta2", "weight_decay", "batch", "steps", "p_motion_free",
                        "p_text_drop", "t_frames"},
                       "train");
        read_field(t, "lr", cfg.train.lr);
        read_field(t, "beta1", cfg.train.beta1);
        read_field(t, "beta2", cfg.train.beta2);
        read_field(t, "weight_decay", cfg.train.weight_decay);
        read_field(t, "batch", cfg.train.batch);
        read_field(t, "steps", cfg.train.steps);
        read_field(t, "p_motion_free", cfg.train.p_motion_free);
        read_field(t, "p_text_drop", cfg.train.p_text_drop);
        read_field(t, "t_frames", cfg.train.t_frames);
    }
    if (root.contains("guidance")) {
        const auto& g = root.at("guidance");
        reject_unknown(g, {"lambda_t", "lambda_m", "motion", "steps"}, "guidance");
        read_field(g, "lambda_t", cfg.guidance.lambda_t);
        read_field(g, "lambda_m", cfg.guidance.lambda_m);
        read_field(g, "motion", cfg.guidance.motion_enabled);
        read_field(g, "steps", cfg.guidance.steps);
    }
    read_field(root, "data", cfg.data_dir);
    read_field(root, "video_data", cfg.video_data_dir);
    read_field(root, "out", cfg.out_dir);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
    json root;
    if (cfg.seed) root["seed"] = *cfg.seed;
    root["model"] = model_to_json_obj(cfg.model);
    root["schedule"] = {{"timesteps", cfg.schedule.timesteps},
                        {"beta_start", cfg.schedule.beta_start},
                        {"beta_end", cfg.schedule.beta_end}};
    root["train"] = {{"lr", cfg.train.lr},
                     {"beta1", cfg.train.beta1},
                     {"beta2", cfg.train.beta2},
                     {"weight_decay", cfg.train.weight_decay},
                     {"batch", cfg.train.batch},
                     {"steps", cfg.train.steps},
                     {"p_motion_free", cfg.train.p_motion_free},
                     {"p_text_drop", cfg.train.p_text_drop},
                     {"t_frames", cfg.train.t_frames}};
    root["guidance"] = {{"lambda_t", cfg.guidance.lambda_t},
                        {"lambda_m", cfg.guidance.lambda_m},
                        {"motion", cfg.guidance.motion_enabled},
                        {"steps", cfg.guidance.steps}};
    if (!cfg.data_dir.empty()) root["data"] = cfg.data_dir;
    if (!cfg.video_data_dir.empty()) root["video_data"] = cfg.video_data_dir;
    root["out"] = cfg.out_dir;
    return root.dump(2) + "\n";
}

uint64_t resolve_seed(std::optional<uint64_t> flag_seed, std::optional<uint64_t> config_seed) {
    if (flag_seed) return *flag_seed;
    if (config_seed) return *config_seed;
    if (const char* env = std::getenv("GENTRON_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ValueError("config: GENTRON_SEED is not a valid unsigned integer");
        }
    }
    return 0;
}

} // namespace gentron
