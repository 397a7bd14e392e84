#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gama/cli.hpp"
#include "gama/defenses.hpp"
#include "gama/encoder.hpp"
#include "gama/evaluate.hpp"
#include "gama/io.hpp"
#include "gama/metrics.hpp"
#include "gama/pca.hpp"
#include "gama/promptbank.hpp"
#include "gama/scene.hpp"
#include "gama/surrogate.hpp"
#include "gama/train_generator.hpp"

namespace gama::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Settings: defaults <- JSON config file <- GAMA_SEED <- explicit flags.

struct FlagSpec {
  std::string key;  // config key; the flag is "--" + key with '_' -> '-'
  std::string help;
  enum Kind { value, list, toggle } kind = value;
};

class Command {
 public:
  Command(CLI::App& parent, std::string name, std::string help, json defaults, std::vector<FlagSpec> flags)
      : defaults_(std::move(defaults)), flags_(std::move(flags)) {
    app_ = parent.add_subcommand(std::move(name), std::move(help));
    app_->add_option("--config", config_path_, "JSON config file; flags override its values");
    for (const auto& f : flags_) {
      std::string flag = "--" + f.key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      switch (f.kind) {
        case FlagSpec::value: app_->add_option(flag, values_[f.key], f.help); break;
        case FlagSpec::list: app_->add_option(flag, lists_[f.key], f.help); break;
        case FlagSpec::toggle: app_->add_flag(flag, toggles_[f.key], f.help); break;
      }
    }
  }

  CLI::App* app() const { return app_; }

  json resolve() const {
    json cfg = defaults_;
    if (!config_path_.empty()) {
      json file;
      try {
        file = json::parse(io::read_text(config_path_));
      } catch (const json::exception& e) {
        throw Error(ErrorKind::config, "config " + config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw Error(ErrorKind::config, "config " + config_path_ + ": expected a JSON object");
      for (auto it = file.begin(); it != file.end(); ++it) {
        if (!cfg.contains(it.key())) throw Error(ErrorKind::config, "config." + it.key() + ": unknown setting");
        cfg[it.key()] = it.value();
      }
    }
    if (const char* env = std::getenv("GAMA_SEED"); env && cfg.contains("seed")) {
      try {
        cfg["seed"] = std::stoull(env);
      } catch (const std::exception&) {
        throw Error(ErrorKind::config, "GAMA_SEED: expected a non-negative integer");
      }
    }
    for (const auto& f : flags_) {
      std::string flag = "--" + f.key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (app_->count(flag) == 0) continue;
      switch (f.kind) {
        case FlagSpec::value: cfg[f.key] = parse_scalar(values_.at(f.key), cfg[f.key]); break;
        case FlagSpec::list: cfg[f.key] = lists_.at(f.key); break;
        case FlagSpec::toggle: cfg[f.key] = toggles_.at(f.key); break;
      }
    }
    return cfg;
  }

 private:
  /// Interprets a flag string with the type of its default.
  static json parse_scalar(const std::string& text, const json& like) {
    if (like.is_string() || like.is_null()) return text;
    try {
      auto v = json::parse(text);
      if (v.is_number() || v.is_boolean()) return v;
    } catch (const json::exception&) {
    }
    return text;  // type-checked when read
  }

  CLI::App* app_ = nullptr;
  json defaults_;
  std::vector<FlagSpec> flags_;
  std::string config_path_;
  std::map<std::string, std::string> values_;
  std::map<std::string, std::vector<std::string>> lists_;
  std::map<std::string, bool> toggles_;
};

template <typename V>
V get(const json& cfg, const std::string& key) {
  const auto& v = cfg.at(key);
  try {
    if constexpr (std::is_same_v<V, bool>) {
      if (!v.is_boolean()) throw json::type_error::create(302, "not a boolean", nullptr);
    } else if constexpr (std::is_integral_v<V>) {
      if (!v.is_number_integer()) throw json::type_error::create(302, "not an integer", nullptr);
      if constexpr (std::is_unsigned_v<V>)
        if (v.get<int64_t>() < 0) throw json::type_error::create(302, "negative", nullptr);
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!v.is_number()) throw json::type_error::create(302, "not a number", nullptr);
    }
    return v.get<V>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::config, key + ": invalid value " + v.dump());
  }
}

std::string require_path(const json& cfg, const std::string& key) {
  if (!cfg.contains(key) || cfg.at(key).is_null() || (cfg.at(key).is_string() && cfg.at(key).get<std::string>().empty())) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    throw Error(ErrorKind::config, key + ": required (" + flag + ")");
  }
  return get<std::string>(cfg, key);
}

std::optional<std::string> optional_path(const json& cfg, const std::string& key) {
  if (!cfg.contains(key) || cfg.at(key).is_null()) return std::nullopt;
  auto s = get<std::string>(cfg, key);
  if (s.empty()) return std::nullopt;
  return s;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

SceneDataset load_split(const fs::path& path, const std::string& split) {
  auto ds = load_dataset(path);
  if (split == "full" || ds.split != Split::full) return ds;
  if (split == "train") return ds.subset(Split::train);
  if (split == "test") return ds.subset(Split::test);
  throw Error(ErrorKind::config, "split: expected train, test or full");
}

SurrogateClassifier load_surrogate(const fs::path& path) {
  return SurrogateClassifier::from_checkpoint(load_checkpoint(path, ModelKind::surrogate));
}

/// Clean metric of a classifier on a dataset (hamming or top-1, percent).
double clean_score(const SurrogateClassifier& model, const SceneDataset& ds) {
  const auto victim = make_victim("self", SurrogateClassifier::from_checkpoint(model.to_checkpoint()));
  return evaluate_attack(nullptr, {&victim}, ds, EvalOptions{}).rows.front().clean;
}

std::vector<ClassPair> read_pairs(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "pairs " + path.string() + ": " + e.what());
  }
  if (doc.is_object() && doc.contains("pairs")) doc = doc["pairs"];
  std::vector<ClassPair> pairs;
  try {
    for (const auto& p : doc) pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  } catch (const json::exception&) {
    throw Error(ErrorKind::config, "pairs: expected [[i, j], ...]");
  }
  return pairs;
}

RunManifest start_manifest(std::string command, const json& cfg, uint64_t seed) {
  RunManifest m;
  m.command = std::move(command);
  m.config = cfg;
  m.seed = seed;
  return m;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------

int cmd_dataset(const json& cfg, std::ostream& out) {
  const auto t0 = Clock::now();
  const fs::path out_path = require_path(cfg, "out");
  DatasetConfig dc;
  dc.num_classes = get<int>(cfg, "classes");
  dc.num_samples = get<int>(cfg, "samples");
  dc.seed = get<uint64_t>(cfg, "seed");
  dc.distribution_id = get<std::string>(cfg, "distribution");
  dc.test_fraction = get<double>(cfg, "test_fraction");
  dc.singleton_fraction = get<double>(cfg, "singleton_fraction");
  dc.triple_fraction = get<double>(cfg, "triple_fraction");
  dc.singletons_only = get<bool>(cfg, "singletons_only");
  dc.dims = {3, get<int>(cfg, "height"), get<int>(cfg, "width")};
  if (dc.num_classes < 4)
    throw Error(ErrorKind::config, "classes: must be >= 4 (got " + std::to_string(dc.num_classes) + ")");
  if (dc.num_samples < dc.num_classes) throw Error(ErrorKind::config, "samples: must be >= classes");
  if (dc.dims.height < 16 || dc.dims.width < 16 || dc.dims.height % 4 || dc.dims.width % 4)
    throw Error(ErrorKind::config, "height/width: must be multiples of 4 and >= 16");
  auto m = start_manifest("dataset", cfg, dc.seed);
  if (auto p = optional_path(cfg, "pairs")) {
    dc.allowed_pairs = read_pairs(*p);
    m.add_input(*p);
  }
  const auto ds = generate_dataset(dc);
  save_dataset(ds, out_path);
  const auto o = compute_cooccurrence(ds);
  out << "dataset: " << ds.size() << " samples (train " << ds.train_indices.size() << ", test "
      << ds.test_indices.size() << "), " << ds.num_classes() << " classes, distribution " << ds.distribution_id
      << "\n";
  out << "co-occurrence: " << o.nonzeros() << " nonzero entries (" << o.upper_pairs().size() << " pairs)\n";
  m.add_output(out_path);
  m.add_output(dataset_sidecar_path(out_path));
  m.wall_clock_seconds = seconds_since(t0);
  write_manifest(m, out_path);
  return 0;
}

int cmd_pretrain_encoder(const json& cfg, std::ostream& out) {
  const auto t0 = Clock::now();
  const fs::path data_path = require_path(cfg, "dataset"), out_path = require_path(cfg, "out");
  const auto full = load_dataset(data_path);
  const auto train = full.split == Split::full ? full.subset(Split::train) : full;
  EncoderConfig ec;
  ec.embed_dim = get<int>(cfg, "embed_dim");
  ec.token_dim = get<int>(cfg, "token_dim");
  ec.text_hidden = get<int>(cfg, "text_hidden");
  ec.input = full.dims;
  const auto prefix = get<std::string>(cfg, "prefix");
  ec.vocabulary = base_vocabulary();
  auto add_word = [&](const std::string& w) {
    if (std::find(ec.vocabulary.begin(), ec.vocabulary.end(), w) == ec.vocabulary.end()) ec.vocabulary.push_back(w);
  };
  for (const auto& w : split_words(prefix)) add_word(w);
  for (const auto& n : full.class_names()) add_word(n);
  EncoderTrainConfig tc;
  tc.epochs = get<int>(cfg, "epochs");
  tc.batch_size = get<int>(cfg, "batch");
  tc.lr = get<double>(cfg, "lr");
  tc.seed = get<uint64_t>(cfg, "seed");
  tc.prefix = prefix;
  auto trained = pretrain_joint_encoder(train, ec, tc);
  const int distractors = get<int>(cfg, "distractors");
  double rank = 0.0;
  if (full.split == Split::full && !full.test_indices.empty())
    rank = retrieval_mean_rank(trained.encoder, full.subset(Split::test), distractors, tc.seed, prefix);
  auto& meta = trained.encoder.metadata;
  if (!meta.is_object()) meta = json::object();
  meta["seed"] = tc.seed;
  meta["epochs"] = tc.epochs;
  meta["distribution_id"] = full.distribution_id;
  meta["prefix"] = prefix;
  meta["retrieval_mean_rank"] = rank;
  meta["final_loss"] = trained.epoch_loss.empty() ? 0.0 : trained.epoch_loss.back();
  save_checkpoint(out_path, trained.encoder.to_checkpoint());
  out << "encoder: K=" << ec.embed_dim << ", temperature " << fmt6(trained.encoder.temperature()) << "\n";
  out << "retrieval mean rank: " << fmt6(rank) << " (true prompt among " << distractors << " distractors)\n";
  auto m = start_manifest("pretrain-encoder", cfg, tc.seed);
  m.add_input(data_path);
  m.add_output(out_path);
  m.add_output(checkpoint_sidecar_path(out_path));
  m.wall_clock_seconds = seconds_since(t0);
  write_manifest(m, out_path);
  return 0;
}

int cmd_train_surrogate(const json& cfg, std::ostream& out) {
  const auto t0 = Clock::now();
  const fs::path data_path = require_path(cfg, "dataset"), out_path = require_path(cfg, "out");
  const auto full = load_dataset(data_path);
  const auto train = full.split == Split::full ? full.subset(Split::train) : full;
  SurrogateConfig sc;
  sc.architecture_id = get<int>(cfg, "arch");
  sc.num_classes = full.num_classes();
  sc.feature_dim = get<int>(cfg, "feature_dim");
  sc.input = full.dims;
  sc.task = task_from_name(get<std::string>(cfg, "task"));
  SurrogateTrainConfig tc;
  tc.epochs = get<int>(cfg, "epochs");
  tc.batch_size = get<int>(cfg, "batch");
  tc.lr = get<double>(cfg, "lr");
  tc.seed = get<uint64_t>(cfg, "seed");
  const bool pgd = get<bool>(cfg, "pgd");
  TrainedSurrogate trained = [&] {
    if (!pgd) return train_surrogate(train, sc, tc);
    PgdConfig pc;
    pc.epsilon = get<float>(cfg, "pgd_eps");
    pc.step = get<float>(cfg, "pgd_step");
    pc.iterations = get<int>(cfg, "pgd_iters");
    return pgd_train(train, sc, tc, pc);
  }();
  const auto eval_set = full.split == Split::full && !full.test_indices.empty() ? full.subset(Split::test) : train;
  const double score = clean_score(trained.model, eval_set);
  trained.model.metadata["clean_score"] = score;
  save_checkpoint(out_path, trained.model.to_checkpoint());
  out << "surrogate: architecture " << sc.architecture_id << ", task " << task_name(sc.task) << ", K="
      << sc.feature_dim << (pgd ? ", PGD adversarial training" : "") << "\n";
  out << "final training loss: " << fmt6(trained.curve.epoch_loss.back()) << "\n";
  out << (sc.task == Task::multi_label ? "clean hamming: " : "clean top-1: ") << fmt6(score) << "%\n";
  auto m = start_manifest("train-surrogate", cfg, tc.seed);
  m.add_input(data_path);
  m.add_output(out_path);
  m.add_output(checkpoint_sidecar_path(out_path));
  m.wall_clock_seconds = seconds_since(t0);
  write_manifest(m, out_path);
  return 0;
}

int cmd_build_bank(const json& cfg, std::ostream& out) {
  const auto t0 = Clock::now();
  const fs::path enc_path = require_path(cfg, "encoder"), out_path = require_path(cfg, "out");
  const auto prefix = get<std::string>(cfg, "prefix");
  auto m = start_manifest("build-bank", cfg, 0);
  const auto encoder = JointEncoder::from_checkpoint(load_checkpoint(enc_path, ModelKind::encoder));
  m.add_input(enc_path);
  std::vector<std::string> names;
  CooccurrenceMatrix o;
  if (auto d = optional_path(cfg, "dataset")) {
    const auto ds = load_dataset(*d);
    names = ds.class_names();
    o = compute_cooccurrence(ds);
    m.add_input(*d);
  } else if (auto c = optional_path(cfg, "cooccurrence")) {
    json doc;
    try {
      doc = json::parse(io::read_text(*c));
      names = doc.at("class_names").get<std::vector<std::string>>();
      const auto rows = doc.at("matrix").get<std::vector<std::vector<int>>>();
      o.matrix = Eigen::MatrixXi::Zero(static_cast<int>(rows.size()), static_cast<int>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) throw Error(ErrorKind::data, "co-occurrence matrix must be square");
        for (std::size_t j = 0; j < rows.size(); ++j) o.matrix(i, j) = rows[i][j] != 0;
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::data, "co-occurrence " + *c + ": " + e.what());
    }
    m.add_input(*c);
  } else {
    throw Error(ErrorKind::config, "dataset: one of --dataset or --cooccurrence is required");
  }
  const auto prompts = build_prompts(names, o, prefix);
  const auto bank = embed_bank(prompts, encoder, io::file_checksum(enc_path), prefix);
  save_bank(bank, out_path);
  out << "prompt bank: P=" << bank.size() << " K=" << bank.dim() << " prefix \"" << prefix << "\"\n";
  m.add_output(out_path);
  auto bin = out_path;
  bin += ".bin";
  m.add_output(bin);
  m.wall_clock_seconds = seconds_since(t0);
  write_manifest(m, out_path);
  return 0;
}

int cmd_train_generator(const json& cfg, std::ostream& out) {
  const auto t0 = Clock::now();
  const fs::path data_path = require_path(cfg, "dataset"), out_path = require_path(cfg, "out");
  const auto method = method_from_name(get<std::string>(cfg, "method"));
  const auto surrogate_paths = cfg.at("surrogate").get<std::vector<std::string>>();
  if (surrogate_paths.empty()) throw Error(ErrorKind::config, "surrogate: at least one --surrogate is required");
  const auto enc_path = optional_path(cfg, "encoder");
  const auto bank_path = optional_path(cfg, "bank");
  if (uses_encoder(method) && !enc_path)
    throw Error(ErrorKind::config, "encoder: required for method " + method_name(method) + " (--encoder)");
  if (uses_bank(method) && !bank_path)
    throw Error(ErrorKind::config, "bank: required for method " + method_name(method) + " (--bank)");

  TrainConfig tc;
  tc.epsilon = get<float>(cfg, "eps");
  tc.alpha = get<double>(cfg, "alpha");
  tc.adam.lr = get<double>(cfg, "lr");
  tc.adam.beta1 = get<double>(cfg, "beta1");
  tc.adam.beta2 = get<double>(cfg, "beta2");
  tc.batch_size = get<int>(cfg, "batch");
  tc.candidates = get<int>(cfg, "candidates");
  tc.epochs = get<int>(cfg, "epochs");
  tc.seed = get<uint64_t>(cfg, "seed");
  tc.resample_per_epoch = get<bool>(cfg, "resample_per_epoch");
  tc.generator.base_width = get<int>(cfg, "base_width");
  tc.generator.res_blocks = get<int>(cfg, "res_blocks");
  validate(tc);

  auto m = start_manifest("train-generator", cfg, tc.seed);
  const auto full = load_dataset(data_path);
  const auto train = full.split == Split::full ? full.subset(Split::train) : full;
  m.add_input(data_path);
  std::vector<SurrogateClassifier> surrogates;
  std::vector<std::string> surrogate_ids;
  for (const auto& p : surrogate_paths) {
    surrogates.push_back(load_surrogate(p));
    surrogate_ids.push_back(fs::path(p).stem().string());
    m.add_input(p);
  }
  std::optional<JointEncoder> encoder;
  std::optional<PromptBank> bank;
  if (uses_encoder(method)) {
    encoder = JointEncoder::from_checkpoint(load_checkpoint(*enc_path, ModelKind::encoder));
    m.add_input(*enc_path);
  }
  if (uses_bank(method)) {
    bank = load_bank(*bank_path);
    m.add_input(*bank_path);
    if (bank->encoder_fingerprint != io::file_checksum(*enc_path))
      throw Error(ErrorKind::compatibility, "bank was embedded with encoder " + bank->encoder_fingerprint +
                                                " but --encoder has checksum " + io::file_checksum(*enc_path));
  }
  AttackTools tools;
  for (const auto& s : surrogates) tools.surrogates.push_back(&s);
  tools.encoder = encoder ? &*encoder : nullptr;
  tools.bank = bank ? &*bank : nullptr;

  out << "method=" << method_name(method) << " eps=" << fmt6(tc.epsilon) << " alpha=" << fmt6(tc.alpha)
      << " lr=" << fmt6(tc.adam.lr) << " betas=(" << fmt6(tc.adam.beta1) << "," << fmt6(tc.adam.beta2)
      << ") batch=" << tc.batch_size << " epochs=" << tc.epochs << "\n";
  if (surrogates.size() > 1)
    out << "ensemble mode: " << surrogates.size() << " surrogates, loss terms averaged over surrogates\n";

  std::string log_text;
  auto result = train_generator(tc, method, train, tools, [&](const LossRecord& r) { log_text += to_json_line(r); });
  std::string joined;
  for (const auto& id : surrogate_ids) joined += (joined.empty() ? "" : "+") + id;
  result.generator.metadata["surrogate_ids"] = joined;
  save_checkpoint(out_path, result.generator.to_checkpoint());
  fs::path log_path = optional_path(cfg, "log").value_or(out_path.string() + ".log.jsonl");
  io::write_text_atomic(log_path, log_text);

  const auto& log = result.log;
  const std::size_t window = std::min<std::size_t>(log.size(), 10);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < window; ++i) {
    first += log[i].losses.total / window;
    last += log[log.size() - 1 - i].losses.total / window;
  }
  out << "steps: " << log.size() << ", smoothed loss " << fmt6(first) << " -> " << fmt6(last) << "\n";
  m.add_output(out_path);
  m.add_output(checkpoint_sidecar_path(out_path));
  m.add_output(log_path);
  m.wall_clock_seconds = seconds_since(t0);
  write_manifest(m, out_path);
  return 0;
}

struct VictimEntry {
  std::string id;
  fs::path checkpoint;
  std::optional<fs::path> pgd_checkpoint;
};

std::vector<VictimEntry> read_victims(const fs::path& path) {
  std::vector<VictimEntry> out;
  try {
    const auto doc = json::parse(io::read_text(path));
    const auto base = path.parent_path();
    const auto& list = doc.is_object() ? doc.at("victims") : doc;
    for (const auto& v : list) {
      VictimEntry e;
      e.checkpoint = base / v.at("checkpoint").get<std::string>();
      e.id = v.contains("id") ? v.at("id").get<std::string>() : e.checkpoint.stem().string();
      if (v.contains("pgd_checkpoint") && !v.at("pgd_checkpoint").is_null())
        e.pgd_checkpoint = base / v.at("pgd_checkpoint").get<std::string>();
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "victims " + path.string() + ": " + e.what());
  }
  if (out.empty()) throw Error(ErrorKind::config, "victims: manifest lists no victims");
  return out;
}

int cmd_evaluate(const json& cfg, std::ostream& out) {
  const auto t0 = Clock::now();
  const fs::path data_path = require_path(cfg, "dataset"), victims_path = require_path(cfg, "victims"),
                 out_path = require_path(cfg, "out");
  const bool zero = get<bool>(cfg, "zero_perturbation");
  const auto gen_path = optional_path(cfg, "generator");
  if (!zero && !gen_path) throw Error(ErrorKind::config, "generator: required (--generator) unless --zero-perturbation");
  const auto defense = defense_from_name(get<std::string>(cfg, "defense"));
  auto m = start_manifest("evaluate", cfg, 0);

  std::optional<PerturbationGenerator> generator;
  EvalOptions opts;
  opts.defense = defense;
  opts.epsilon = kDefaultEpsilon;
  if (gen_path) {
    generator = PerturbationGenerator::from_checkpoint(load_checkpoint(*gen_path, ModelKind::generator));
    m.add_input(*gen_path);
    const auto& meta = generator->metadata;
    if (meta.contains("epsilon")) opts.epsilon = meta["epsilon"].get<float>();
    if (meta.contains("surrogate_fingerprints"))
      opts.surrogate_fingerprints = meta["surrogate_fingerprints"].get<std::vector<std::string>>();
    if (meta.contains("distribution_id")) opts.surrogate_distribution = meta["distribution_id"].get<std::string>();
    opts.surrogate_id = meta.value("surrogate_ids", std::string("surrogate"));
    opts.generator_id = fs::path(*gen_path).stem().string();
  } else {
    opts.generator_id = "no_attack";
    opts.surrogate_id = "none";
  }
  if (!cfg.at("eps").is_null()) opts.epsilon = get<float>(cfg, "eps");
  if (auto id = optional_path(cfg, "generator_id")) opts.generator_id = *id;
  if (auto id = optional_path(cfg, "surrogate_id")) opts.surrogate_id = *id;

  const auto dataset = load_split(data_path, get<std::string>(cfg, "split"));
  m.add_input(data_path);
  m.add_input(victims_path);
  std::vector<Victim> victims;
  for (const auto& e : read_victims(victims_path)) {
    fs::path ckpt = e.checkpoint;
    if (defense == Defense::pgd) {
      if (!e.pgd_checkpoint)
        throw Error(ErrorKind::config, "victims: '" + e.id + "' has no pgd_checkpoint for --defense pgd");
      ckpt = *e.pgd_checkpoint;
    }
    victims.push_back(make_victim(e.id, load_surrogate(ckpt)));
    m.add_input(ckpt);
  }
  std::vector<const Victim*> ptrs;
  for (const auto& v : victims) ptrs.push_back(&v);

  if (generator) {
    const int probes = get<int>(cfg, "budget_probes");
    const double worst = probe_generator_budget(*generator, opts.epsilon, dataset.dims, probes, 0);
    out << "budget check: max ||x_adv - x||_inf = " << fmt6(worst) << " <= eps " << fmt6(opts.epsilon) << " over "
        << probes << " random images\n";
  }
  const auto pred_path = optional_path(cfg, "predictions_out");
  const auto emb_path = optional_path(cfg, "embeddings_out");
  opts.keep_outputs = pred_path || emb_path;
  const auto report = evaluate_attack(generator ? &*generator : nullptr, ptrs, dataset, opts);
  write_report_csv(report.rows, out_path);
  m.add_output(out_path);

  const int c = dataset.num_classes();
  if (pred_path) {
    std::string text = "generator_id,victim_id,accuracy,index,predicted\n";
    for (std::size_t v = 0; v < report.rows.size(); ++v) {
      const auto& preds = report.outputs[v].attacked_predictions;
      for (std::size_t i = 0; i * c < preds.size(); ++i) {
        std::string bits;
        for (int k = 0; k < c; ++k) bits += preds[i * c + k] ? '1' : '0';
        text += report.rows[v].generator_id + "," + report.rows[v].victim_id + "," +
                fmt6(report.rows[v].attacked / 100.0) + "," + std::to_string(i) + "," + bits + "\n";
      }
    }
    io::write_text_atomic(*pred_path, text);
    m.add_output(*pred_path);
  }
  if (emb_path) {
    std::string text = "victim_id,group,index,embedding\n";
    for (std::size_t v = 0; v < report.rows.size(); ++v) {
      for (const auto& [group, t] : {std::pair{"clean", report.outputs[v].clean_features},
                                     std::pair{"perturbed", report.outputs[v].attacked_features}}) {
        const int64_t k = t.dim(1);
        for (int64_t i = 0; i < t.dim(0); ++i) {
          text += report.rows[v].victim_id + "," + group + "," + std::to_string(i) + ",";
          for (int64_t j = 0; j < k; ++j) text += (j ? " " : "") + fmt6(t.ptr()[i * k + j]);
          text += "\n";
        }
      }
    }
    io::write_text_atomic(*emb_path, text);
    m.add_output(*emb_path);
  }

  out << std::left << std::setw(16) << "victim" << std::setw(14) << "task" << std::setw(10) << "scenario"
      << std::setw(10) << "defense" << std::right << std::setw(12) << "clean" << std::setw(12) << "attacked" << "\n";
  for (const auto& r : report.rows)
    out << std::left << std::setw(16) << r.victim_id << std::setw(14) << r.task << std::setw(10) << r.scenario
        << std::setw(10) << r.defense << std::right << std::setw(12) << fmt6(r.clean) << std::setw(12)
        << fmt6(r.attacked) << "\n";
  m.wall_clock_seconds = seconds_since(t0);
  write_manifest(m, out_path);
  return 0;
}

// --- report ---------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw Error(ErrorKind::data, path.string() + ": expected header '" + header + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw Error(ErrorKind::data, "report: bad number '" + s + "'");
  }
}

/// Keeps first-seen order of keys.
template <typename K>
void remember(std::vector<K>& order, const K& key) {
  if (std::find(order.begin(), order.end(), key) == order.end()) order.push_back(key);
}

std::string report_transfer_matrix(const std::vector<fs::path>& inputs, std::ostream& out) {
  std::vector<std::string> victims, row_keys;
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> cells;
  std::map<std::string, std::pair<double, int>> clean;
  std::set<std::pair<std::string, std::string>> white;
  for (const auto& p : inputs)
    for (const auto& r : read_report_csv(p)) {
      remember(victims, r.victim_id);
      const auto key = r.defense == "none" ? r.generator_id : r.generator_id + "[" + r.defense + "]";
      remember(row_keys, key);
      auto& cell = cells[{key, r.victim_id}];
      cell.first += r.attacked;
      cell.second += 1;
      if (r.defense == "none") {
        clean[r.victim_id].first += r.clean;
        clean[r.victim_id].second += 1;
      }
      if (r.scenario == "white") white.insert({key, r.victim_id});
    }
  if (victims.empty()) throw Error(ErrorKind::data, "report: no rows in inputs");
  std::string csv = "generator_id";
  for (const auto& v : victims) csv += "," + v;
  csv += ",Average\n";
  auto emit = [&](const std::string& label, const std::function<std::optional<double>(const std::string&)>& value) {
    csv += label;
    double sum = 0;
    int n = 0;
    for (const auto& v : victims) {
      const auto x = value(v);
      csv += ",";
      if (x) {
        csv += fmt6(*x);
        sum += *x;
        ++n;
      }
    }
    csv += "," + (n ? fmt6(sum / n) : std::string()) + "\n";
  };
  emit("No Attack", [&](const std::string& v) -> std::optional<double> {
    auto it = clean.find(v);
    if (it == clean.end()) return std::nullopt;
    return it->second.first / it->second.second;
  });
  for (const auto& k : row_keys)
    emit(k, [&](const std::string& v) -> std::optional<double> {
      auto it = cells.find({k, v});
      if (it == cells.end()) return std::nullopt;
      return it->second.first / it->second.second;
    });
  out << csv;
  if (!white.empty()) {
    out << "white-box cells:";
    for (const auto& [k, v] : white) out << " (" << k << ", " << v << ")";
    out << "\n";
  }
  return csv;
}

std::string report_ablation(const std::vector<fs::path>& inputs, std::ostream& out) {
  const std::vector<std::pair<std::string, AttackMethod>> arms = {{"L_i", AttackMethod::ablate_img_only},
                                                                  {"L_i+L_t", AttackMethod::ablate_img_txt},
                                                                  {"L", AttackMethod::gama}};
  auto method_of = [&](const std::string& generator_id) -> std::optional<AttackMethod> {
    std::optional<AttackMethod> best;
    std::size_t best_len = 0;
    for (auto m : all_methods()) {
      const auto name = method_name(m);
      if (generator_id.rfind(name, 0) == 0 && name.size() > best_len) {
        best = m;
        best_len = name.size();
      }
    }
    return best;
  };
  std::map<std::pair<AttackMethod, std::string>, std::array<double, 3>> acc;  // clean sum, attacked sum, count
  std::vector<std::string> scenarios;
  for (const auto& p : inputs)
    for (const auto& r : read_report_csv(p)) {
      const auto m = method_of(r.generator_id);
      if (!m || r.defense != "none") continue;
      remember(scenarios, r.scenario);
      auto& a = acc[{*m, r.scenario}];
      a[0] += r.clean;
      a[1] += r.attacked;
      a[2] += 1;
    }
  std::string csv = "arm,method,scenario,rows,clean,attacked\n";
  for (const auto& sc : scenarios)
    for (const auto& [arm, m] : arms) {
      auto it = acc.find({m, sc});
      if (it == acc.end()) continue;
      const auto& a = it->second;
      csv += arm + "," + method_name(m) + "," + sc + "," + std::to_string(static_cast<int>(a[2])) + "," +
             fmt6(a[0] / a[2]) + "," + fmt6(a[1] / a[2]) + "\n";
    }
  out << csv;
  return csv;
}

std::string report_context(const std::vector<fs::path>& inputs, const json& cfg, std::ostream& out) {
  const fs::path data_path = require_path(cfg, "dataset");
  const auto ds = load_dataset(data_path);
  const auto o = compute_cooccurrence(ds);
  const int c = ds.num_classes();
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<uint8_t>, double>> groups;
  for (const auto& p : inputs)
    for (const auto& row : read_csv(p, "generator_id,victim_id,accuracy,index,predicted")) {
      if (row.size() != 5 || static_cast<int>(row[4].size()) != c)
        throw Error(ErrorKind::data, p.string() + ": malformed prediction row");
      const std::pair key{row[0], row[1]};
      remember(keys, key);
      auto& g = groups[key];
      g.second = to_double(row[2]);
      for (char b : row[4]) g.first.push_back(b == '1');
    }
  std::string csv = "generator_id,victim_id,precision,misclassification,context_score\n";
  for (const auto& k : keys) {
    const auto& g = groups[k];
    const auto s = context_consistency_score(g.first, c, o, g.second);
    csv += k.first + "," + k.second + "," + fmt6(s.precision) + "," + fmt6(s.misclassification) + "," +
           fmt6(s.score) + "\n";
  }
  out << csv;
  return csv;
}

std::string report_pca(const std::vector<fs::path>& inputs, const json& cfg, const fs::path& out_path,
                       std::ostream& out) {
  const auto victim = optional_path(cfg, "victim");
  std::vector<std::vector<double>> clean, perturbed;
  std::string chosen;
  for (const auto& p : inputs)
    for (const auto& row : read_csv(p, "victim_id,group,index,embedding")) {
      if (row.size() != 4) throw Error(ErrorKind::data, p.string() + ": malformed embedding row");
      if (victim ? row[0] != *victim : (!chosen.empty() && row[0] != chosen)) continue;
      chosen = row[0];
      std::vector<double> v;
      std::istringstream ss(row[3]);
      std::string tok;
      while (ss >> tok) v.push_back(to_double(tok));
      (row[1] == "clean" ? clean : perturbed).push_back(std::move(v));
    }
  if (clean.empty() || perturbed.empty()) throw Error(ErrorKind::data, "pca: need clean and perturbed embeddings");
  auto to_matrix = [](const std::vector<std::vector<double>>& rows) {
    Eigen::MatrixXd mtx(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.front().size()) throw Error(ErrorKind::data, "pca: ragged embeddings");
      for (std::size_t j = 0; j < rows[i].size(); ++j) mtx(i, j) = rows[i][j];
    }
    return mtx;
  };
  const auto r = pca_embed_export(to_matrix(clean), to_matrix(perturbed), out_path);
  out << "pca (" << chosen << "): eigenvalues " << fmt6(r.eigenvalues(0)) << ", " << fmt6(r.eigenvalues(1))
      << "; explained " << fmt6(r.explained(0)) << ", " << fmt6(r.explained(1)) << "\n";
  out << "centroid separation (clean vs perturbed): " << fmt6(centroid_separation(r, clean.size())) << "\n";
  return {};
}

int cmd_report(const json& cfg, std::ostream& out) {
  const auto t0 = Clock::now();
  const fs::path out_path = require_path(cfg, "out");
  const auto input_strs = cfg.at("inputs").get<std::vector<std::string>>();
  if (input_strs.empty()) throw Error(ErrorKind::config, "inputs: at least one --inputs file is required");
  const std::vector<fs::path> inputs(input_strs.begin(), input_strs.end());
  const auto mode = get<std::string>(cfg, "mode");
  auto m = start_manifest("report", cfg, 0);
  for (const auto& p : inputs) m.add_input(p);
  if (mode == "transfer_matrix") {
    io::write_text_atomic(out_path, report_transfer_matrix(inputs, out));
  } else if (mode == "ablation") {
    io::write_text_atomic(out_path, report_ablation(inputs, out));
  } else if (mode == "context") {
    io::write_text_atomic(out_path, report_context(inputs, cfg, out));
    m.add_input(get<std::string>(cfg, "dataset"));
  } else if (mode == "pca") {
    report_pca(inputs, cfg, out_path, out);
  } else {
    throw Error(ErrorKind::config, "mode: expected transfer_matrix, ablation, context or pca");
  }
  m.add_output(out_path);
  m.wall_clock_seconds = seconds_since(t0);
  write_manifest(m, out_path);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generative multi-label attack laboratory", "gama"};
  app.require_subcommand(1);
  using F = FlagSpec;

  Command dataset(app, "dataset", "Generate a synthetic scene dataset",
                  {{"out", ""}, {"classes", 6}, {"samples", 600}, {"seed", 7}, {"distribution", "shapes-a"},
                   {"pairs", nullptr}, {"test_fraction", 0.2}, {"singleton_fraction", 0.25},
                   {"triple_fraction", 0.1}, {"singletons_only", false}, {"height", 32}, {"width", 32}},
                  {{"out", "Output dataset file"}, {"classes", "Number of classes C"}, {"samples", "Number of samples N"},
                   {"seed", "Master seed"}, {"distribution", "Distribution id (shapes-a, shapes-b)"},
                   {"pairs", "JSON file of allowed class pairs [[i,j],...]"}, {"test_fraction", "Held-out share"},
                   {"singleton_fraction", "Share of one-object scenes"}, {"triple_fraction", "Share of 3-4 object scenes"},
                   {"singletons_only", "Only one-object scenes", F::toggle}, {"height", "Canvas height"},
                   {"width", "Canvas width"}});

  Command encoder(app, "pretrain-encoder", "Pretrain the joint image-text encoder",
                  {{"dataset", ""}, {"out", ""}, {"seed", 1}, {"epochs", 30}, {"batch", 32}, {"lr", 2e-3},
                   {"embed_dim", 64}, {"token_dim", 32}, {"text_hidden", 64}, {"prefix", kDefaultPromptPrefix},
                   {"distractors", 32}},
                  {{"dataset", "Dataset file"}, {"out", "Output checkpoint"}, {"seed", "Seed"}, {"epochs", "Epochs"},
                   {"batch", "Batch size"}, {"lr", "Learning rate"}, {"embed_dim", "Embedding size K"},
                   {"token_dim", "Token embedding size"}, {"text_hidden", "Text MLP width"},
                   {"prefix", "Prompt prefix"}, {"distractors", "Distractor prompts for the retrieval check"}});

  Command surrogate(app, "train-surrogate", "Train a surrogate or victim classifier",
                    {{"dataset", ""}, {"out", ""}, {"arch", 0}, {"seed", 1}, {"epochs", 20}, {"batch", 32},
                     {"lr", 2e-3}, {"feature_dim", 64}, {"task", "multi_label"}, {"pgd", false},
                     {"pgd_eps", kDefaultEpsilon}, {"pgd_step", 2.5 / 255.0}, {"pgd_iters", 5}},
                    {{"dataset", "Dataset file"}, {"out", "Output checkpoint"}, {"arch", "Architecture id (0, 1, 2)"},
                     {"seed", "Seed"}, {"epochs", "Epochs"}, {"batch", "Batch size"}, {"lr", "Learning rate"},
                     {"feature_dim", "Feature layer size K"}, {"task", "multi_label or single_label"},
                     {"pgd", "PGD adversarial training", F::toggle}, {"pgd_eps", "PGD budget"},
                     {"pgd_step", "PGD step size"}, {"pgd_iters", "PGD iterations"}});

  Command bank(app, "build-bank", "Build and embed the co-occurrence prompt bank",
               {{"encoder", ""}, {"dataset", nullptr}, {"cooccurrence", nullptr}, {"prefix", kDefaultPromptPrefix},
                {"out", ""}},
               {{"encoder", "Encoder checkpoint"}, {"dataset", "Dataset to compute O from (training split)"},
                {"cooccurrence", "JSON {class_names, matrix} instead of a dataset"}, {"prefix", "Prompt prefix"},
                {"out", "Output bank file"}});

  Command generator(app, "train-generator", "Train a perturbation generator",
                    {{"method", "gama"}, {"surrogate", json::array()}, {"encoder", nullptr}, {"bank", nullptr},
                     {"dataset", ""}, {"eps", kDefaultEpsilon}, {"alpha", 1.0}, {"lr", 1e-4}, {"beta1", 0.5},
                     {"beta2", 0.999}, {"batch", 16}, {"candidates", 16}, {"epochs", 10}, {"seed", 1},
                     {"resample_per_epoch", false}, {"base_width", 8}, {"res_blocks", 2}, {"out", ""},
                     {"log", nullptr}},
                    {{"method", "gama, ls_only, gap_bce, cda_rel_bce, ablate_img_only, ablate_img_txt"},
                     {"surrogate", "Surrogate checkpoint (repeat for an ensemble)", F::list},
                     {"encoder", "Joint encoder checkpoint"}, {"bank", "Prompt bank file"}, {"dataset", "Dataset file"},
                     {"eps", "L-inf budget in [0,1] units"}, {"alpha", "Contrastive margin"}, {"lr", "Adam lr"},
                     {"beta1", "Adam beta1"}, {"beta2", "Adam beta2"}, {"batch", "Batch size"},
                     {"candidates", "Prompt candidates B per draw"}, {"epochs", "Epochs"}, {"seed", "Seed"},
                     {"resample_per_epoch", "Draw prompt candidates once per epoch", F::toggle},
                     {"base_width", "Generator width"}, {"res_blocks", "Residual blocks"},
                     {"out", "Output checkpoint"}, {"log", "Loss log (JSON lines)"}});

  Command evaluate(app, "evaluate", "Evaluate a generator against victims",
                   {{"generator", nullptr}, {"zero_perturbation", false}, {"victims", ""}, {"dataset", ""},
                    {"split", "test"}, {"defense", "none"}, {"out", ""}, {"eps", nullptr}, {"generator_id", nullptr},
                    {"surrogate_id", nullptr}, {"predictions_out", nullptr}, {"embeddings_out", nullptr},
                    {"budget_probes", 1000}},
                   {{"generator", "Generator checkpoint"},
                    {"zero_perturbation", "Evaluate x_adv = x (no generator)", F::toggle},
                    {"victims", "Victims manifest JSON"}, {"dataset", "Target dataset file"},
                    {"split", "train, test or full"}, {"defense", "none, median3 or pgd"}, {"out", "Report CSV"},
                    {"eps", "Budget override"}, {"generator_id", "Report generator id"},
                    {"surrogate_id", "Report surrogate id"}, {"predictions_out", "Attacked predictions CSV"},
                    {"embeddings_out", "Victim feature CSV (clean and perturbed)"},
                    {"budget_probes", "Random images for the budget check"}});

  Command report(app, "report", "Aggregate evaluation outputs",
                 {{"inputs", json::array()}, {"mode", "transfer_matrix"}, {"out", ""}, {"dataset", nullptr},
                  {"victim", nullptr}},
                 {{"inputs", "Input CSV files", F::list},
                  {"mode", "transfer_matrix, ablation, context or pca"},
                  {"out", "Output CSV"}, {"dataset", "Dataset (context mode: source of O)"},
                  {"victim", "Victim id (pca mode)"}});

  const std::vector<std::pair<const Command*, std::function<int(const json&)>>> commands = {
      {&dataset, [&](const json& c) { return cmd_dataset(c, out); }},
      {&encoder, [&](const json& c) { return cmd_pretrain_encoder(c, out); }},
      {&surrogate, [&](const json& c) { return cmd_train_surrogate(c, out); }},
      {&bank, [&](const json& c) { return cmd_build_bank(c, out); }},
      {&generator, [&](const json& c) { return cmd_train_generator(c, out); }},
      {&evaluate, [&](const json& c) { return cmd_evaluate(c, out); }},
      {&report, [&](const json& c) { return cmd_report(c, out); }},
  };

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    for (const auto& [cmd, fn] : commands)
      if (cmd->app()->parsed()) return fn(cmd->resolve());
    return 0;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gama::cli
