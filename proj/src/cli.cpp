#include "memjack/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "memjack/errors.hpp"
#include "memjack/store.hpp"
#include "memjack/text.hpp"

namespace memjack {

using nlohmann::json;

KvConfig parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    KvConfig kv;
    std::string line;
    while (std::getline(in, line)) {
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line is not key=value: " + s, s);
        kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    return kv;
}

namespace {

double to_double(const std::string& key, const std::string& value) {
    try {
        return std::stod(value);
    } catch (...) {
        throw ConfigError("config key '" + key + "' needs a number, got '" + value + "'", key);
    }
}

int to_int(const std::string& key, const std::string& value) {
    try {
        return std::stoi(value);
    } catch (...) {
        throw ConfigError("config key '" + key + "' needs an integer, got '" + value + "'", key);
    }
}

uint64_t to_u64(const std::string& key, const std::string& value) {
    try {
        return std::stoull(value);
    } catch (...) {
        throw ConfigError("config key '" + key + "' needs an integer, got '" + value + "'", key);
    }
}

bool to_bool(const std::string& key, const std::string& value) {
    std::string v = to_lower(value);
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "' needs a boolean, got '" + value + "'", key);
}

BackendConfig* role_backend(CampaignConfig& c, const std::string& role) {
    if (role == "planner") return &c.planner_backend;
    if (role == "attacker") return &c.attacker_backend;
    if (role == "victim") return &c.victim_backend;
    if (role == "judge") return &c.judge_backend;
    if (role == "embedder") return &c.embedder_backend;
    return nullptr;
}

}  // namespace

void apply_kv(CampaignConfig& c, const KvConfig& kv) {
    for (const auto& [key, value] : kv) {
        if (key == "rounds") c.round_budget = to_int(key, value);
        else if (key == "per_anchor_budget") c.per_anchor_budget = to_int(key, value);
        else if (key == "angle_threshold") c.angle_threshold = to_int(key, value);
        else if (key == "candidates") c.candidate_count = to_int(key, value);
        else if (key == "parallelism") c.parallelism = to_int(key, value);
        else if (key == "seed") c.seed = to_u64(key, value);
        else if (key == "t0") c.t0 = to_double(key, value);
        else if (key == "t_max") c.t_max = to_double(key, value);
        else if (key == "history_cap") c.history_cap = to_int(key, value);
        else if (key == "stats_window") c.stats_window = to_int(key, value);
        else if (key == "embed_dim") c.embed_dim = to_int(key, value);
        else if (key == "policy") c.policy = split(value, ';');
        else if (key == "epsilon") c.filter.residue_threshold = to_double(key, value);
        else if (key == "beta_p") c.filter.fitness_coefficient = to_double(key, value);
        else if (key == "beta_r") c.filter.reward_coefficient = to_double(key, value);
        else if (key == "inlp_max_iterations") c.filter.max_iterations = to_int(key, value);
        else if (key == "chance_stop_accuracy")
            c.filter.chance_stop_accuracy = to_double(key, value);
        else if (key == "lambda") c.retrieval.lambda = to_double(key, value);
        else if (key == "tau_sim") c.retrieval.similarity_floor = to_double(key, value);
        else if (key == "visual_weight") c.retrieval.visual_weight = to_double(key, value);
        else if (key == "goal_weight") c.retrieval.goal_weight = to_double(key, value);
        else if (key == "top_k") c.retrieval.top_k = to_int(key, value);
        else if (key == "failure_decay") c.retrieval.failure_decay = to_double(key, value);
        else if (key == "capacity") c.retrieval.capacity = static_cast<size_t>(to_u64(key, value));
        else if (key == "tau_r") c.reflection.trigger_count = to_int(key, value);
        else if (key == "near_miss_low") c.reflection.near_miss_low = to_double(key, value);
        else if (key == "near_miss_high") c.reflection.near_miss_high = to_double(key, value);
        else if (key == "population") c.evolution.population_size = to_int(key, value);
        else if (key == "generations") c.evolution.generations = to_int(key, value);
        else if (key == "crossover_rate") c.evolution.crossover_rate = to_double(key, value);
        else if (key == "mutation_rate") c.evolution.mutation_rate = to_double(key, value);
        else if (key == "elite_count") c.evolution.elite_count = to_int(key, value);
        else if (key == "simulations") c.search.simulations = to_int(key, value);
        else if (key == "exploration_constant")
            c.search.exploration_constant = to_double(key, value);
        else if (key == "prior_weight") c.search.prior_weight = to_double(key, value);
        else if (key == "rollout_noise") c.search.rollout_noise = to_double(key, value);
        else if (key == "tau_v") c.hint.similarity_threshold = to_double(key, value);
        else if (key == "max_hints") c.hint.max_hints = to_int(key, value);
        else if (key == "laplace_smoothing") c.kg.laplace_smoothing = to_bool(key, value);
        else if (key == "sim.seed") c.sim_world.seed = c.sim_victim.seed = to_u64(key, value);
        else if (key == "sim.categories") c.sim_world.category_pool = split(value, ';');
        else if (key == "sim.anchors_per_image")
            c.sim_world.anchors_per_image = to_int(key, value);
        else if (key == "sim.goal_style_pool")
            c.sim_world.goal_style_pool = to_int(key, value);
        else if (key == "sim.base_success_prob")
            c.sim_victim.base_success_prob = to_double(key, value);
        else if (key == "sim.escalation_gain")
            c.sim_victim.escalation_gain = to_double(key, value);
        else if (key == "sim.vulnerable") {
            c.sim_victim.vulnerable_combos.clear();
            for (const auto& combo : split(value, ';')) {
                size_t colon = combo.rfind(':');
                if (colon == std::string::npos)
                    throw ConfigError("sim.vulnerable entries are category:angle", key);
                c.sim_victim.vulnerable_combos.insert(
                    {trim(combo.substr(0, colon)), to_int(key, combo.substr(colon + 1))});
            }
        } else if (key == "sim.defense_mix") {
            auto parts = split(value, ';');
            if (parts.size() != kDefensePatternCount)
                throw ConfigError("sim.defense_mix needs six values", key);
            for (size_t i = 0; i < parts.size(); ++i)
                c.sim_victim.defense_mix[i] = to_double(key, parts[i]);
        } else if (key == "angles_file")
            c.templates = AngleTemplates::load(value);
        else if (key == "blocklist_file")
            c.blocklist = Blocklist::load(value);
        else if (key == "risk_file") {
            std::ifstream in(value);
            if (!in) throw IoError("cannot open risk config: " + value);
            c.risk = RiskConfig::load(in);
        } else if (key == "http.endpoint") {
            for (const char* r : {"planner", "attacker", "victim", "judge", "embedder"})
                role_backend(c, r)->endpoint_url = value;
        } else if (key == "http.api_key_env") {
            for (const char* r : {"planner", "attacker", "victim", "judge", "embedder"})
                role_backend(c, r)->api_key_env_var = value;
        } else if (key == "http.timeout") {
            for (const char* r : {"planner", "attacker", "victim", "judge", "embedder"})
                role_backend(c, r)->timeout_s = to_double(key, value);
        } else if (key == "http.max_retries") {
            for (const char* r : {"planner", "attacker", "victim", "judge", "embedder"})
                role_backend(c, r)->max_retries = to_int(key, value);
        } else {
            size_t dot = key.find('.');
            BackendConfig* b =
                dot == std::string::npos ? nullptr : role_backend(c, key.substr(0, dot));
            if (b) {
                std::string sub = key.substr(dot + 1);
                if (sub == "model") b->model_name = value;
                else if (sub == "endpoint") b->endpoint_url = value;
                else if (sub == "api_key_env") b->api_key_env_var = value;
                else if (sub == "temperature") b->temperature = to_double(key, value);
                else
                    throw ConfigError("unknown config key '" + key + "'", key);
            } else {
                throw ConfigError("unknown config key '" + key + "'", key);
            }
        }
    }
}

namespace cli {

namespace {

std::vector<std::string> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open image manifest: " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        // sampleId, optionally followed by a file path
        size_t ws = s.find_first_of(" \t");
        ids.push_back(ws == std::string::npos ? s : trim(s.substr(0, ws)));
    }
    if (ids.empty()) throw ConfigError("image manifest has no entries: " + path, "images");
    return ids;
}

void set_backend_kinds(CampaignConfig& config, const std::string& backend) {
    BackendKind kind = backend == "http" ? BackendKind::http : BackendKind::sim;
    config.planner_backend.kind = kind;
    config.attacker_backend.kind = kind;
    config.victim_backend.kind = kind;
    config.judge_backend.kind = kind;
    config.embedder_backend.kind = kind;
}

void apply_ablation(CampaignConfig& config, const std::string& ablate) {
    for (const auto& part : split(ablate, ',')) {
        std::string a = to_lower(part);
        if (a == "memory") config.ablation.memory_enabled = false;
        else if (a == "reflection") config.ablation.reflection_enabled = false;
        else if (a == "replanning") config.ablation.replanning_enabled = false;
        else if (!a.empty())
            throw ConfigError("unknown ablation '" + a +
                                  "' (expected memory, reflection, replanning)",
                              "ablate");
    }
}

struct CampaignCliArgs {
    std::string images;
    std::string out_dir = "campaign_out";
    int rounds = 20;
    uint64_t seed = 0;
    std::string backend = "sim";
    std::string ablate;
    int parallelism = 1;
    std::string config_path;
    std::string redaction;  // default depends on backend
    std::string corpus_path;
    std::string basis_path;
};

// Runs the campaign and writes the full deterministic output tree.
void execute_campaign(const CampaignCliArgs& args, const KvConfig& kv,
                      const std::filesystem::path& out_dir) {
    CampaignConfig config;
    apply_kv(config, kv);
    set_backend_kinds(config, args.backend);
    apply_ablation(config, args.ablate);
    config.round_budget = args.rounds;
    config.seed = args.seed;
    config.parallelism = args.parallelism;
    if (config.sim_victim.seed == 0) config.sim_victim.seed = args.seed;
    if (config.sim_world.seed == 0) config.sim_world.seed = args.seed;
    if (config.sim_victim.vulnerable_combos.empty() && !config.sim_world.category_pool.empty()) {
        // Default sim scenario: one learnable (category, angle) combo.
        config.sim_victim.vulnerable_combos.insert({config.sim_world.category_pool.front(), 5});
        if (config.sim_victim.base_success_prob == 0.0)
            config.sim_victim.base_success_prob = 0.25;
    }

    Redaction redaction;
    if (!args.redaction.empty())
        redaction = args.redaction == "full" ? Redaction::full : Redaction::omit_responses;
    else
        redaction = args.backend == "sim" ? Redaction::full : Redaction::omit_responses;

    std::vector<std::string> images = read_manifest(args.images);

    SharedState shared;
    if (!args.basis_path.empty()) {
        std::ifstream in(args.basis_path);
        if (!in) throw IoError("cannot open basis file: " + args.basis_path);
        shared.basis = load_basis(in);
    } else if (!args.corpus_path.empty()) {
        std::ifstream in(args.corpus_path);
        if (!in) throw IoError("cannot open corpus file: " + args.corpus_path);
        LabeledCorpus corpus = load_corpus(in);
        RngStream rng(config.seed, "inlp-train");
        shared.basis = train_refusal_basis(corpus, config.filter, rng);
    }

    auto [trajectories, stats] = run_campaign(images, config, &shared);

    std::filesystem::create_directories(out_dir);
    std::vector<std::string> files;
    for (size_t i = 0; i < trajectories.size(); ++i) {
        std::ostringstream tag;
        tag << "r" << std::setw(8) << std::setfill('0') << i;
        files.push_back(
            write_trajectory(out_dir, trajectories[i], redaction, tag.str()).filename().string());
    }
    shared.memory.save(out_dir);
    shared.kg.save(out_dir);

    json manifest{{"seed", config.seed},
                  {"rounds", config.round_budget},
                  {"backend", args.backend},
                  {"ablate", args.ablate},
                  {"parallelism", config.parallelism},
                  {"redaction", redaction == Redaction::full ? "full" : "omit-responses"},
                  {"images", images},
                  {"files", files},
                  {"config_kv", kv}};
    std::ofstream mout(out_dir / "campaign.json");
    mout << manifest.dump(2) << '\n';

    json jstats{{"n", stats.n},
                {"success_count", stats.success_count},
                {"asr", stats.asr},
                {"mean_rounds_to_success", stats.mean_rounds_to_success},
                {"angle_usage", stats.angle_usage},
                {"defense_histogram", stats.defense_histogram}};
    std::ofstream sout(out_dir / "stats.json");
    sout << jstats.dump(2) << '\n';
}

std::vector<Trajectory> read_campaign_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("trace_", 0) == 0 && entry.path().extension() == ".json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no trace_*.json files in " + dir.string());
    std::vector<Trajectory> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read_trajectory(f));
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

int cmd_campaign_replay(const std::string& dir_str) {
    std::filesystem::path dir(dir_str);
    std::ifstream min(dir / "campaign.json");
    if (!min) throw IoError("no campaign.json in " + dir_str);
    json manifest = json::parse(min);

    CampaignCliArgs args;
    args.seed = manifest["seed"].get<uint64_t>();
    args.rounds = manifest["rounds"].get<int>();
    args.backend = manifest["backend"].get<std::string>();
    args.ablate = manifest["ablate"].get<std::string>();
    args.parallelism = manifest["parallelism"].get<int>();
    args.redaction = manifest["redaction"].get<std::string>();

    std::filesystem::path replay_dir = dir / "replay_check";
    std::filesystem::remove_all(replay_dir);

    // Re-run from the recorded images and config.
    std::filesystem::path tmp_manifest = replay_dir;
    std::filesystem::create_directories(replay_dir);
    tmp_manifest /= "images.txt";
    {
        std::ofstream out(tmp_manifest);
        for (const auto& img : manifest["images"]) out << img.get<std::string>() << '\n';
    }
    args.images = tmp_manifest.string();
    KvConfig kv = manifest["config_kv"].get<KvConfig>();
    execute_campaign(args, kv, replay_dir);

    size_t compared = 0;
    for (const auto& file : manifest["files"]) {
        std::string name = file.get<std::string>();
        std::string original = read_file(dir / name);
        std::string replayed = read_file(replay_dir / name);
        if (original.empty() || original != replayed) {
            std::cerr << "replay mismatch: " << name << "\n";
            return 2;
        }
        ++compared;
    }
    std::filesystem::remove_all(replay_dir);
    std::cout << "replay OK: " << compared << " trajectory logs byte-identical\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"memjack: memory-augmented multi-agent red-teaming orchestration"};
    app.require_subcommand(1);

    // campaign-run
    auto* run_cmd = app.add_subcommand("campaign-run", "run a campaign over an image manifest");
    CampaignCliArgs cargs;
    run_cmd->add_option("--images", cargs.images, "image manifest, one sampleId per line")
        ->required();
    run_cmd->add_option("--out", cargs.out_dir, "output directory")
        ->capture_default_str();
    run_cmd->add_option("--rounds", cargs.rounds, "maximum rounds per image")
        ->capture_default_str();
    run_cmd->add_option("--seed", cargs.seed, "campaign seed")->capture_default_str();
    run_cmd->add_option("--backend", cargs.backend, "backend kind: sim or http")
        ->check(CLI::IsMember({"sim", "http"}))
        ->capture_default_str();
    run_cmd->add_option("--ablate", cargs.ablate,
                        "comma list of components to disable: memory,reflection,replanning");
    run_cmd->add_option("--parallelism", cargs.parallelism, "concurrent per-image workers")
        ->capture_default_str();
    run_cmd->add_option("--config", cargs.config_path, "key=value config file");
    run_cmd->add_option("--redaction", cargs.redaction,
                        "omit-responses or full (default: full for sim, omit otherwise)")
        ->check(CLI::IsMember({"omit-responses", "full"}));
    run_cmd->add_option("--corpus", cargs.corpus_path,
                        "labeled embedding corpus; trains the refusal basis");
    run_cmd->add_option("--basis", cargs.basis_path, "pre-trained refusal basis file");

    // campaign-replay
    auto* replay_cmd =
        app.add_subcommand("campaign-replay", "re-run a campaign and verify byte-identical logs");
    std::string replay_dir;
    replay_cmd->add_option("--dir", replay_dir, "campaign output directory")->required();

    // inlp-train
    auto* inlp_cmd = app.add_subcommand("inlp-train", "train a refusal basis from a corpus file");
    std::string inlp_corpus, inlp_out;
    int inlp_iters = 10;
    uint64_t inlp_seed = 0;
    double inlp_stop = 0.55;
    inlp_cmd->add_option("--corpus", inlp_corpus, "corpus file: label then D floats per line")
        ->required();
    inlp_cmd->add_option("--out", inlp_out, "basis output file")->required();
    inlp_cmd->add_option("--max-iterations", inlp_iters, "INLP iteration budget")
        ->capture_default_str();
    inlp_cmd->add_option("--seed", inlp_seed, "training seed")->capture_default_str();
    inlp_cmd->add_option("--chance-stop", inlp_stop, "held-out accuracy early-stop level")
        ->capture_default_str();

    // memory-inspect
    auto* mem_cmd = app.add_subcommand("memory-inspect", "summarize a saved experience memory");
    std::string mem_dir;
    int mem_top = 5;
    mem_cmd->add_option("--dir", mem_dir, "campaign output directory")->required();
    mem_cmd->add_option("--top", mem_top, "entries to list per index")->capture_default_str();

    // kg-export
    auto* kg_cmd = app.add_subcommand("kg-export", "export the knowledge graph");
    std::string kg_dir, kg_out;
    bool kg_dot = false;
    kg_cmd->add_option("--dir", kg_dir, "campaign output directory")->required();
    kg_cmd->add_flag("--dot", kg_dot, "emit DOT format");
    kg_cmd->add_option("--out", kg_out, "output file (stdout when omitted)");

    // report
    auto* report_cmd = app.add_subcommand("report", "compute campaign reports");
    std::string rep_dir, rep_metrics = "asr,rounds,angles,defenses", rep_format = "table",
                rep_out;
    int rep_window = 500;
    report_cmd->add_option("--dir", rep_dir, "campaign output directory")->required();
    report_cmd->add_option("--metrics", rep_metrics,
                           "comma list: asr,rounds,angles,defenses,reuse,experienceBuckets")
        ->capture_default_str();
    report_cmd->add_option("--window", rep_window, "moving average window")
        ->capture_default_str();
    report_cmd->add_option("--format", rep_format, "table, csv or svg-plot")
        ->check(CLI::IsMember({"table", "csv", "svg-plot"}))
        ->capture_default_str();
    report_cmd->add_option("--out", rep_out, "output file (stdout when omitted)");

    // shard-export
    auto* shard_cmd = app.add_subcommand("shard-export", "export dataset shards");
    std::string shard_dir, shard_label = "all", shard_out = "shards";
    int shard_size = 100;
    shard_cmd->add_option("--dir", shard_dir, "campaign output directory")->required();
    shard_cmd->add_option("--shard-size", shard_size, "tuples per shard")->capture_default_str();
    shard_cmd->add_option("--label", shard_label, "label filter: all, safe, controversial, unsafe")
        ->check(CLI::IsMember({"all", "safe", "controversial", "unsafe"}))
        ->capture_default_str();
    shard_cmd->add_option("--out", shard_out, "shard output directory")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (run_cmd->parsed()) {
            KvConfig kv;
            if (!cargs.config_path.empty()) kv = parse_kv_file(cargs.config_path);
            execute_campaign(cargs, kv, cargs.out_dir);
            std::cout << cargs.out_dir << "\n";
            return 0;
        }
        if (replay_cmd->parsed()) return cmd_campaign_replay(replay_dir);
        if (inlp_cmd->parsed()) {
            std::ifstream in(inlp_corpus);
            if (!in) throw IoError("cannot open corpus file: " + inlp_corpus);
            LabeledCorpus corpus = load_corpus(in);
            FilterConfig fc;
            fc.max_iterations = inlp_iters;
            fc.chance_stop_accuracy = inlp_stop;
            RngStream rng(inlp_seed, "inlp-train");
            RefusalBasis basis = train_refusal_basis(corpus, fc, rng);
            std::ofstream out(inlp_out);
            if (!out) throw IoError("cannot write basis file: " + inlp_out);
            save_basis(out, basis);
            std::cerr << "trained " << basis.count() << " refusal directions in "
                      << basis.meta.iterations_run << " iterations (" << basis.meta.stop_reason
                      << ")\n";
            std::cout << inlp_out << "\n";
            return 0;
        }
        if (mem_cmd->parsed()) {
            ExperienceMemory memory;
            memory.load(mem_dir);
            RetrievalConfig rc;
            for (IndexKind kind : {IndexKind::visual, IndexKind::strategy}) {
                auto stats = memory.reuse_stats(kind);
                std::cout << (kind == IndexKind::visual ? "visual" : "strategy") << " index: "
                          << stats.entry_count << " entries, " << stats.unique_keys
                          << " unique (anchor, goal) keys, reuse ratio " << stats.reuse_ratio
                          << "\n";
                std::vector<MemoryEntry> sorted = memory.entries(kind);
                std::sort(sorted.begin(), sorted.end(), [&](const auto& a, const auto& b) {
                    return ExperienceMemory::effective_q(a, rc.failure_decay) >
                           ExperienceMemory::effective_q(b, rc.failure_decay);
                });
                for (int i = 0; i < mem_top && i < static_cast<int>(sorted.size()); ++i) {
                    const auto& e = sorted[static_cast<size_t>(i)];
                    std::cout << "  #" << e.id << " angle=" << e.strategy.angle_id
                              << " anchor=" << e.strategy.anchor_key << " Q=" << e.q
                              << " n_f=" << e.failure_count << " uses=" << e.use_count << "\n";
                }
            }
            return 0;
        }
        if (kg_cmd->parsed()) {
            KnowledgeGraph kg;
            kg.load(kg_dir);
            std::string dot = kg.to_dot();  // DOT is the only export format
            (void)kg_dot;
            if (kg_out.empty()) {
                std::cout << dot;
            } else {
                std::ofstream out(kg_out);
                if (!out) throw IoError("cannot write kg export: " + kg_out);
                out << dot;
                std::cout << kg_out << "\n";
            }
            return 0;
        }
        if (report_cmd->parsed()) {
            std::vector<Trajectory> trajectories = read_campaign_dir(rep_dir);
            ReportSpec spec;
            spec.metrics = split(rep_metrics, ',');
            spec.window = rep_window;
            spec.format = rep_format;
            ExperienceMemory memory;
            const ExperienceMemory* mem_ptr = nullptr;
            if (std::filesystem::exists(std::filesystem::path(rep_dir) / "memory.snapshot")) {
                memory.load(rep_dir);
                mem_ptr = &memory;
            }
            std::string doc = report(trajectories, spec, mem_ptr);
            if (rep_out.empty()) {
                std::cout << doc;
            } else {
                std::ofstream out(rep_out);
                if (!out) throw IoError("cannot write report: " + rep_out);
                out << doc;
                std::cout << rep_out << "\n";
            }
            return 0;
        }
        if (shard_cmd->parsed()) {
            std::vector<Trajectory> trajectories = read_campaign_dir(shard_dir);
            std::filesystem::path out_dir = std::filesystem::path(shard_dir) / shard_out;
            ShardResult result =
                export_shards(trajectories, static_cast<size_t>(shard_size), shard_label,
                              out_dir, Redaction::omit_responses);
            std::cerr << result.tuple_count << " tuples into " << result.shard_paths.size()
                      << " shards\n";
            for (const auto& [label, count] : result.label_counts)
                std::cerr << "  " << label << ": " << count << "\n";
            std::cout << result.manifest_path << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error" << (e.key.empty() ? "" : " (" + e.key + ")") << ": "
                  << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace cli
}  // namespace memjack
