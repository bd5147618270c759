// peec — privacy-enhanced emotion coding toolkit.
//
// One executable exposing every pipeline stage as a subcommand. A JSON config
// file (--config) sets any field; command-line flags override the file; the
// merged ("effective") config is written into every run directory so a run
// can be reproduced from its outputs alone.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "peec/peec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Exit codes
// ---------------------------------------------------------------------------

constexpr int kExitOk = 0;
constexpr int kExitAuditFail = 1; // `audit` verdict FAIL (documented)
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitNetwork = 5;

/// Config/flag problems that are the caller's fault.
class UsageError : public peec::Error {
public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// RunConfig: every tunable, with documented defaults
// ---------------------------------------------------------------------------

struct RunConfig {
  std::uint64_t seed = 7;

  // corpus (synthesis + label handling)
  size_t corpus_n_per_cell = 2;
  size_t corpus_dim = 64;
  size_t corpus_speakers = 8;
  size_t corpus_languages = 2;
  double snr_valence = 1.0;
  double snr_gender = 1.0;
  double snr_speaker = 1.0;
  double snr_language = 1.0;
  double noise_std = 0.25;
  std::string corpus_name; // non-empty: map raw emotion labels by this corpus

  // training
  size_t epochs = 100;
  size_t batch_size = 32;
  size_t latent_dim = 512;
  double alpha = 1.0;
  double learning_rate = 1e-5;
  std::string optimizer = "adam"; // adam | sgd
  size_t enc_hidden1 = 2000;
  size_t enc_hidden2 = 1000;
  size_t head_hidden = 400;
  double dropout = 0.5;
  double leaky_slope = 0.01;
  double speaker_weight = 1.0;
  double gender_weight = 1.0;
  double language_weight = 1.0;

  // evaluation
  size_t loso_repeats = 5;
  std::vector<double> grid_c = peec::kDefaultGridC;
  std::vector<double> grid_gamma = peec::kDefaultGridGamma;
  double member_fraction = 0.5;
  std::vector<size_t> sweep_dims = {32, 64, 128, 256, 512};

  // attacker network
  size_t attack_hidden = 256;
  size_t attack_epochs = 50;
  size_t attack_batch = 32;
  double attack_lr = 1e-3;
  double attack_dropout = 0.5;

  // services
  std::string listen = "127.0.0.1:0";
  std::string cloud = "127.0.0.1:7602";
  std::string upstream = "127.0.0.1:7602";
  double rate_limit = 0.0;
  bool passthrough = false;
  double duration = 0.0; // serve-* lifetime in seconds; 0 = until signal
};

json config_to_json(const RunConfig& c) {
  return json{
      {"seed", c.seed},
      {"corpus",
       {{"n_per_cell", c.corpus_n_per_cell},
        {"dim", c.corpus_dim},
        {"speakers", c.corpus_speakers},
        {"languages", c.corpus_languages},
        {"snr_valence", c.snr_valence},
        {"snr_gender", c.snr_gender},
        {"snr_speaker", c.snr_speaker},
        {"snr_language", c.snr_language},
        {"noise_std", c.noise_std},
        {"corpus_name", c.corpus_name}}},
      {"train",
       {{"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"latent_dim", c.latent_dim},
        {"alpha", c.alpha},
        {"learning_rate", c.learning_rate},
        {"optimizer", c.optimizer},
        {"enc_hidden1", c.enc_hidden1},
        {"enc_hidden2", c.enc_hidden2},
        {"head_hidden", c.head_hidden},
        {"dropout", c.dropout},
        {"leaky_slope", c.leaky_slope},
        {"speaker_weight", c.speaker_weight},
        {"gender_weight", c.gender_weight},
        {"language_weight", c.language_weight}}},
      {"eval",
       {{"loso_repeats", c.loso_repeats},
        {"grid_c", c.grid_c},
        {"grid_gamma", c.grid_gamma},
        {"member_fraction", c.member_fraction},
        {"sweep_dims", c.sweep_dims}}},
      {"attack",
       {{"hidden", c.attack_hidden},
        {"epochs", c.attack_epochs},
        {"batch", c.attack_batch},
        {"lr", c.attack_lr},
        {"dropout", c.attack_dropout}}},
      {"serve",
       {{"listen", c.listen},
        {"cloud", c.cloud},
        {"upstream", c.upstream},
        {"rate_limit", c.rate_limit},
        {"passthrough", c.passthrough},
        {"duration", c.duration}}},
  };
}

template <typename T>
void read_field(const json& obj, const std::string& group,
                const std::string& key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError("config field '" + group + "." + key +
                     "' has the wrong type: " + e.what());
  }
}

void check_keys(const json& obj, const std::string& group,
                std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw UsageError("unknown config key '" +
                       (group.empty() ? key : group + "." + key) + "'");
    }
  }
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("config root must be a JSON object");
  check_keys(j, "", {"seed", "corpus", "train", "eval", "attack", "serve"});
  RunConfig c;
  read_field(j, "", "seed", c.seed);
  if (j.contains("corpus")) {
    const json& g = j.at("corpus");
    check_keys(g, "corpus",
               {"n_per_cell", "dim", "speakers", "languages", "snr_valence",
                "snr_gender", "snr_speaker", "snr_language", "noise_std",
                "corpus_name"});
    read_field(g, "corpus", "n_per_cell", c.corpus_n_per_cell);
    read_field(g, "corpus", "dim", c.corpus_dim);
    read_field(g, "corpus", "speakers", c.corpus_speakers);
    read_field(g, "corpus", "languages", c.corpus_languages);
    read_field(g, "corpus", "snr_valence", c.snr_valence);
    read_field(g, "corpus", "snr_gender", c.snr_gender);
    read_field(g, "corpus", "snr_speaker", c.snr_speaker);
    read_field(g, "corpus", "snr_language", c.snr_language);
    read_field(g, "corpus", "noise_std", c.noise_std);
    read_field(g, "corpus", "corpus_name", c.corpus_name);
  }
  if (j.contains("train")) {
    const json& g = j.at("train");
    check_keys(g, "train",
               {"epochs", "batch_size", "latent_dim", "alpha", "learning_rate",
                "optimizer", "enc_hidden1", "enc_hidden2", "head_hidden",
                "dropout", "leaky_slope", "speaker_weight", "gender_weight",
                "language_weight"});
    read_field(g, "train", "epochs", c.epochs);
    read_field(g, "train", "batch_size", c.batch_size);
    read_field(g, "train", "latent_dim", c.latent_dim);
    read_field(g, "train", "alpha", c.alpha);
    read_field(g, "train", "learning_rate", c.learning_rate);
    read_field(g, "train", "optimizer", c.optimizer);
    read_field(g, "train", "enc_hidden1", c.enc_hidden1);
    read_field(g, "train", "enc_hidden2", c.enc_hidden2);
    read_field(g, "train", "head_hidden", c.head_hidden);
    read_field(g, "train", "dropout", c.dropout);
    read_field(g, "train", "leaky_slope", c.leaky_slope);
    read_field(g, "train", "speaker_weight", c.speaker_weight);
    read_field(g, "train", "gender_weight", c.gender_weight);
    read_field(g, "train", "language_weight", c.language_weight);
  }
  if (j.contains("eval")) {
    const json& g = j.at("eval");
    check_keys(g, "eval",
               {"loso_repeats", "grid_c", "grid_gamma", "member_fraction",
                "sweep_dims"});
    read_field(g, "eval", "loso_repeats", c.loso_repeats);
    read_field(g, "eval", "grid_c", c.grid_c);
    read_field(g, "eval", "grid_gamma", c.grid_gamma);
    read_field(g, "eval", "member_fraction", c.member_fraction);
    read_field(g, "eval", "sweep_dims", c.sweep_dims);
  }
  if (j.contains("attack")) {
    const json& g = j.at("attack");
    check_keys(g, "attack", {"hidden", "epochs", "batch", "lr", "dropout"});
    read_field(g, "attack", "hidden", c.attack_hidden);
    read_field(g, "attack", "epochs", c.attack_epochs);
    read_field(g, "attack", "batch", c.attack_batch);
    read_field(g, "attack", "lr", c.attack_lr);
    read_field(g, "attack", "dropout", c.attack_dropout);
  }
  if (j.contains("serve")) {
    const json& g = j.at("serve");
    check_keys(g, "serve",
               {"listen", "cloud", "upstream", "rate_limit", "passthrough",
                "duration"});
    read_field(g, "serve", "listen", c.listen);
    read_field(g, "serve", "cloud", c.cloud);
    read_field(g, "serve", "upstream", c.upstream);
    read_field(g, "serve", "rate_limit", c.rate_limit);
    read_field(g, "serve", "passthrough", c.passthrough);
    read_field(g, "serve", "duration", c.duration);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Config <-> library types
// ---------------------------------------------------------------------------

peec::TrainConfig train_config(const RunConfig& c) {
  peec::TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.latent_dim = c.latent_dim;
  t.alpha = c.alpha;
  t.learning_rate = c.learning_rate;
  if (c.optimizer == "adam") {
    t.optimizer = peec::OptimizerKind::Adam;
  } else if (c.optimizer == "sgd") {
    t.optimizer = peec::OptimizerKind::Sgd;
  } else {
    throw UsageError("config field 'train.optimizer' must be adam or sgd, got '" +
                     c.optimizer + "'");
  }
  t.seed = c.seed;
  t.speaker_weight = c.speaker_weight;
  t.gender_weight = c.gender_weight;
  t.language_weight = c.language_weight;
  t.arch.enc_hidden1 = c.enc_hidden1;
  t.arch.enc_hidden2 = c.enc_hidden2;
  t.arch.head_hidden = c.head_hidden;
  t.arch.dropout = c.dropout;
  t.arch.leaky_slope = c.leaky_slope;
  return t;
}

peec::AttackConfig attack_config(const RunConfig& c) {
  peec::AttackConfig a;
  a.hidden = c.attack_hidden;
  a.epochs = c.attack_epochs;
  a.batch = c.attack_batch;
  a.lr = c.attack_lr;
  a.dropout = c.attack_dropout;
  a.leaky_slope = c.leaky_slope;
  a.seed = c.seed;
  return a;
}

peec::PipelineOptions pipeline_options(const RunConfig& c) {
  peec::PipelineOptions p;
  p.loso_repeats = c.loso_repeats;
  p.grid_C = c.grid_c;
  p.grid_gamma = c.grid_gamma;
  p.attack = attack_config(c);
  p.seed = c.seed;
  return p;
}

peec::SnrConfig snr_config(const RunConfig& c) {
  peec::SnrConfig s;
  s.valence = c.snr_valence;
  s.gender = c.snr_gender;
  s.speaker = c.snr_speaker;
  s.language = c.snr_language;
  s.noise_std = c.noise_std;
  return s;
}

peec::Representation representation_for(const std::string& method,
                                        const RunConfig& cfg) {
  if (method == "raw") return peec::make_identity_representation();
  if (method == "pca") return peec::make_pca_representation(cfg.latent_dim);
  if (method == "ae") {
    peec::TrainConfig t = train_config(cfg);
    t.alpha = 0.0;
    return peec::make_encoder_representation(t, "ae");
  }
  if (method == "proposed") {
    return peec::make_encoder_representation(train_config(cfg), "proposed");
  }
  throw UsageError("--method must be raw, ae, pca or proposed, got '" +
                   method + "'");
}

// ---------------------------------------------------------------------------
// Run directory plumbing
// ---------------------------------------------------------------------------

struct RunContext {
  fs::path dir;
  std::ofstream log;

  explicit RunContext(const fs::path& dir_path) : dir(dir_path) {
    fs::create_directories(dir);
    log.open(dir / "log.txt", std::ios::trunc);
  }

  fs::path path(const std::string& name) const { return dir / name; }

  void note(const std::string& line) {
    log << line << '\n';
    log.flush();
    std::cout << line << '\n';
  }

  void write_text(const std::string& name, const std::string& content) {
    peec::bytes::write_text_file((dir / name).string(), content);
  }
};

fs::path resolve_run_dir(const std::string& flag_value,
                         const std::string& subcommand) {
  if (!flag_value.empty()) return flag_value;
  const char* root = std::getenv("PEEC_RUN_ROOT");
  return fs::path(root != nullptr ? root : "./runs") / subcommand;
}

void write_effective_config(RunContext& ctx, const std::string& subcommand,
                            const RunConfig& cfg, const json& paths) {
  json j;
  j["subcommand"] = subcommand;
  j["config"] = config_to_json(cfg);
  j["paths"] = paths;
  ctx.write_text("effective_config.json", j.dump(2) + "\n");
}

peec::Corpus load_corpus(const std::string& path, const RunConfig& cfg) {
  peec::LabelSchema schema;
  schema.corpus_name = cfg.corpus_name;
  const std::string text = peec::bytes::read_text_file(path);
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".arff") {
    return peec::parse_arff(text, schema);
  }
  return peec::parse_csv(text, schema);
}

std::string history_csv(const peec::TrainHistory& history) {
  std::string out = "epoch,recon_loss,speaker_loss,gender_loss,language_loss,"
                    "speaker_acc,gender_acc,language_acc\n";
  for (size_t e = 0; e < history.size(); ++e) {
    const auto& s = history[e];
    out += std::to_string(e);
    for (double v : {s.recon_loss, s.speaker_loss, s.gender_loss,
                     s.language_loss, s.speaker_acc, s.gender_acc,
                     s.language_acc}) {
      out += ',';
      out += peec::detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string latents_csv(const peec::Corpus& corpus, const peec::Matrix& z) {
  std::string out = "id";
  for (size_t j = 0; j < z.cols(); ++j) out += ",z" + std::to_string(j);
  out += ",valence,speaker,gender,language\n";
  for (size_t r = 0; r < corpus.size(); ++r) {
    const auto& rec = corpus[r];
    out += rec.id;
    for (size_t j = 0; j < z.cols(); ++j) {
      out += ',';
      out += peec::detail::format_double(z(r, j));
    }
    out += ',';
    out += peec::to_string(rec.valence);
    out += ',';
    out += rec.speaker;
    out += ',';
    out += peec::to_string(rec.gender);
    out += ',';
    out += rec.language;
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Service lifetime
// ---------------------------------------------------------------------------

std::atomic<bool> g_stop{false};

void install_signal_handlers() {
  struct sigaction sa{};
  sa.sa_handler = [](int) { g_stop.store(true); };
  ::sigaction(SIGINT, &sa, nullptr);
  ::sigaction(SIGTERM, &sa, nullptr);
}

void wait_for_stop(double duration_seconds) {
  const auto deadline =
      std::chrono::steady_clock::now() +
      std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(duration_seconds));
  while (!g_stop.load()) {
    if (duration_seconds > 0.0 &&
        std::chrono::steady_clock::now() >= deadline) {
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, const std::string& run_dir) {
  RunContext ctx(resolve_run_dir(run_dir, "synth"));
  write_effective_config(ctx, "synth", cfg, json::object());
  const peec::Corpus corpus = peec::synth_corpus(
      cfg.corpus_n_per_cell, cfg.corpus_dim, cfg.corpus_speakers,
      cfg.corpus_languages, snr_config(cfg), cfg.seed);
  ctx.write_text("corpus.csv", peec::write_csv(corpus));
  ctx.write_text("corpus.arff", peec::write_arff(corpus, "peec_synth"));
  ctx.note("synth: wrote " + std::to_string(corpus.size()) + " utterances (dim " +
           std::to_string(corpus.dim()) + ", " +
           std::to_string(corpus.speakers().size()) + " speakers, " +
           std::to_string(corpus.languages().size()) + " languages) to " +
           ctx.path("corpus.csv").string());
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const std::string& run_dir,
              const std::string& corpus_path, bool fit_svm) {
  RunContext ctx(resolve_run_dir(run_dir, "train"));
  write_effective_config(ctx, "train", cfg, {{"corpus", corpus_path}});
  const peec::Corpus corpus = load_corpus(corpus_path, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  auto trained =
      peec::train_privacy_model(corpus, corpus.all_rows(), train_config(cfg));
  const double secs = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  trained.model.save(ctx.path("model.bin").string());
  ctx.write_text("history.csv", history_csv(trained.history));
  const auto& last = trained.history.back();
  ctx.note("train: " + std::to_string(cfg.epochs) + " epochs in " +
           std::to_string(secs) + "s; final recon " +
           peec::detail::format_double(last.recon_loss) + ", head acc spk/gen/lan " +
           peec::detail::format_double(last.speaker_acc) + "/" +
           peec::detail::format_double(last.gender_acc) + "/" +
           peec::detail::format_double(last.language_acc));

  if (fit_svm) {
    const peec::Matrix z =
        trained.model.encode_raw(corpus.feature_matrix(corpus.all_rows()));
    std::vector<int> y;
    for (size_t r = 0; r < corpus.size(); ++r) {
      y.push_back(corpus[r].valence == peec::Valence::Pos ? 1 : -1);
    }
    const auto grid = peec::grid_search(z, y, cfg.grid_c, cfg.grid_gamma,
                                        peec::derive_seed(cfg.seed, 0x475356));
    const peec::SvmModel svm =
        peec::svm_train_smo(z, y, grid.C, grid.gamma, 1e-3, 10,
                            peec::derive_seed(cfg.seed, 0x53564d));
    peec::save_svm(svm, ctx.path("svm.bin").string());
    ctx.note("train: fitted valence SVM (C=" + peec::detail::format_double(grid.C) +
             ", gamma=" + peec::detail::format_double(grid.gamma) + ", " +
             std::to_string(svm.n_support()) + " support vectors)");
  }
  return kExitOk;
}

int cmd_encode(const RunConfig& cfg, const std::string& run_dir,
               const std::string& corpus_path, const std::string& model_path) {
  RunContext ctx(resolve_run_dir(run_dir, "encode"));
  write_effective_config(ctx, "encode", cfg,
                         {{"corpus", corpus_path}, {"model", model_path}});
  const peec::Corpus corpus = load_corpus(corpus_path, cfg);
  const peec::PrivacyEncoderModel model =
      peec::PrivacyEncoderModel::load(model_path);
  const peec::Matrix z =
      model.encode_raw(corpus.feature_matrix(corpus.all_rows()));
  ctx.write_text("latents.csv", latents_csv(corpus, z));
  ctx.note("encode: " + std::to_string(z.rows()) + " rows -> latent dim " +
           std::to_string(z.cols()));
  return kExitOk;
}

int cmd_pca(const RunConfig& cfg, const std::string& run_dir,
            const std::string& corpus_path) {
  RunContext ctx(resolve_run_dir(run_dir, "pca"));
  write_effective_config(ctx, "pca", cfg, {{"corpus", corpus_path}});
  const peec::Corpus corpus = load_corpus(corpus_path, cfg);
  const auto rows = corpus.all_rows();
  const peec::ScalerParams scaler = peec::fit_minmax(corpus, rows);
  const peec::Matrix x =
      peec::apply_minmax(scaler, corpus.feature_matrix(rows));
  const peec::PcaModel model = peec::pca_fit(x, cfg.latent_dim);
  ctx.write_text("latents.csv",
                 latents_csv(corpus, peec::pca_transform(model, x)));
  std::string var = "component,explained_variance\n";
  for (size_t k = 0; k < model.explained_variance.size(); ++k) {
    var += std::to_string(k) + ',' +
           peec::detail::format_double(model.explained_variance[k]) + '\n';
  }
  ctx.write_text("variance.csv", var);
  ctx.note("pca: projected to " + std::to_string(cfg.latent_dim) +
           " components");
  return kExitOk;
}

int cmd_eval_loso(const RunConfig& cfg, const std::string& run_dir,
                  const std::string& corpus_path, const std::string& method) {
  RunContext ctx(resolve_run_dir(run_dir, "eval-loso"));
  write_effective_config(ctx, "eval-loso", cfg,
                         {{"corpus", corpus_path}, {"method", method}});
  const peec::Corpus corpus = load_corpus(corpus_path, cfg);
  peec::LosoOptions options;
  options.repeats = cfg.loso_repeats;
  options.grid_C = cfg.grid_c;
  options.grid_gamma = cfg.grid_gamma;
  options.seed = cfg.seed;
  const peec::LosoResult result =
      peec::evaluate_loso(corpus, representation_for(method, cfg), options);

  std::string csv = "repeat,emotion_uar\n";
  for (size_t r = 0; r < result.repeat_uars.size(); ++r) {
    csv += std::to_string(r) + ',' +
           peec::detail::format_double(result.repeat_uars[r]) + '\n';
  }
  csv += "mean," + peec::detail::format_double(result.mean_uar) + '\n';
  ctx.write_text("loso.csv", csv);

  const auto violations = peec::audit_violations(result.trace, corpus);
  std::string audit = "folds=" + std::to_string(result.trace.fold_count) +
                      " speakers=" + std::to_string(result.trace.speaker_count) +
                      " violations=" + std::to_string(violations.size()) + "\n";
  for (const auto& v : violations) audit += v + '\n';
  ctx.write_text("audit.txt", audit);

  ctx.note("eval-loso[" + method + "]: mean UAR " +
           peec::detail::format_double(result.mean_uar) + " over " +
           std::to_string(cfg.loso_repeats) + " repeats; " +
           std::to_string(violations.size()) + " protocol violations");
  return kExitOk;
}

int cmd_attack(const RunConfig& cfg, const std::string& run_dir,
               const std::string& corpus_path, const std::string& method,
               const std::string& attribute) {
  RunContext ctx(resolve_run_dir(run_dir, "attack"));
  write_effective_config(
      ctx, "attack", cfg,
      {{"corpus", corpus_path}, {"method", method}, {"attribute", attribute}});
  const peec::Corpus corpus = load_corpus(corpus_path, cfg);
  const peec::Representation rep = representation_for(method, cfg);
  const peec::SpeakerSplit split = peec::split_speakers(
      corpus, cfg.member_fraction, peec::derive_seed(cfg.seed, 0x535054));

  std::set<std::string> member_set(split.members.begin(), split.members.end());
  std::vector<size_t> member_rows;
  for (size_t r = 0; r < corpus.size(); ++r) {
    if (member_set.count(corpus[r].speaker)) member_rows.push_back(r);
  }
  const peec::ScalerParams scaler = peec::fit_minmax(corpus, member_rows);
  const peec::Transform transform =
      rep.fit(corpus, member_rows, scaler, peec::derive_seed(cfg.seed, 0x464954));
  const peec::Matrix z_all = transform(
      peec::apply_minmax(scaler, corpus.feature_matrix(corpus.all_rows())));

  peec::AttackConfig atk = attack_config(cfg);
  double accuracy = 0.0;
  if (attribute == "gender") {
    atk.seed = peec::derive_seed(cfg.seed, 0x474154);
    accuracy =
        peec::attack_attribute_split(corpus, z_all, peec::Attribute::Gender, atk);
  } else if (attribute == "language") {
    atk.seed = peec::derive_seed(cfg.seed, 0x4c4154);
    accuracy = peec::attack_attribute_split(corpus, z_all,
                                            peec::Attribute::Language, atk);
  } else if (attribute == "membership") {
    atk.seed = peec::derive_seed(cfg.seed, 0x4d4154);
    accuracy = peec::attack_membership_latents(corpus, z_all, split.members,
                                               split.nonmembers, atk);
  } else {
    throw UsageError("--attribute must be gender, language or membership, "
                     "got '" + attribute + "'");
  }
  ctx.write_text("attack.csv", "method,attribute,accuracy\n" + method + ',' +
                                   attribute + ',' +
                                   peec::detail::format_double(accuracy) + '\n');
  ctx.note("attack[" + method + "/" + attribute + "]: accuracy " +
           peec::detail::format_double(accuracy));
  return kExitOk;
}

int cmd_report(const RunConfig& cfg, const std::string& run_dir,
               const std::string& corpus_path) {
  RunContext ctx(resolve_run_dir(run_dir, "report"));
  write_effective_config(ctx, "report", cfg, {{"corpus", corpus_path}});
  const peec::Corpus corpus = load_corpus(corpus_path, cfg);
  peec::ReportOptions options;
  options.encoder = train_config(cfg);
  options.member_fraction = cfg.member_fraction;
  options.pipeline = pipeline_options(cfg);
  const peec::AttackReport report = peec::build_report(corpus, options);

  ctx.write_text("report.csv", peec::report_csv(report));
  ctx.write_text("report.txt", peec::report_table(report));
  const auto violations = peec::audit_violations(report.trace, corpus);
  std::string audit = "fit_events=" + std::to_string(report.trace.events.size()) +
                      " violations=" + std::to_string(violations.size()) + "\n";
  for (const auto& v : violations) audit += v + '\n';
  ctx.write_text("audit.txt", audit);
  ctx.note("report:\n" + peec::report_table(report));
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg, const std::string& run_dir,
              const std::string& corpus_path) {
  RunContext ctx(resolve_run_dir(run_dir, "sweep"));
  write_effective_config(ctx, "sweep", cfg, {{"corpus", corpus_path}});
  const peec::Corpus corpus = load_corpus(corpus_path, cfg);
  const auto rows = peec::latent_sweep(corpus, cfg.sweep_dims,
                                       train_config(cfg), pipeline_options(cfg),
                                       cfg.member_fraction);
  ctx.write_text("sweep.csv", peec::sweep_csv(rows));
  ctx.note("sweep: " + std::to_string(rows.size()) + " latent dims evaluated");
  return kExitOk;
}

int cmd_serve_cloud(const RunConfig& cfg, const std::string& run_dir,
                    const std::string& svm_path) {
  RunContext ctx(resolve_run_dir(run_dir, "serve-cloud"));
  write_effective_config(ctx, "serve-cloud", cfg, {{"svm", svm_path}});
  peec::net::CloudService service(cfg.listen, peec::load_svm(svm_path));
  service.start();
  ctx.note("serve-cloud: listening on " + service.address());
  install_signal_handlers();
  wait_for_stop(cfg.duration);
  service.stop();
  ctx.note("serve-cloud: stopped");
  return kExitOk;
}

int cmd_serve_edge(const RunConfig& cfg, const std::string& run_dir,
                   const std::string& model_path) {
  RunContext ctx(resolve_run_dir(run_dir, "serve-edge"));
  write_effective_config(ctx, "serve-edge", cfg, {{"model", model_path}});
  peec::net::EdgeOptions options;
  options.passthrough = cfg.passthrough;
  peec::net::EdgeService service(cfg.listen,
                                 peec::PrivacyEncoderModel::load(model_path),
                                 cfg.cloud, options);
  service.start();
  ctx.note("serve-edge: listening on " + service.address() + ", cloud at " +
           cfg.cloud + (cfg.passthrough ? " [PASSTHROUGH TEST MODE]" : ""));
  install_signal_handlers();
  wait_for_stop(cfg.duration);
  service.stop();
  ctx.note("serve-edge: stopped");
  return kExitOk;
}

int cmd_serve_tap(const RunConfig& cfg, const std::string& run_dir) {
  RunContext ctx(resolve_run_dir(run_dir, "serve-tap"));
  write_effective_config(ctx, "serve-tap", cfg, json::object());
  peec::net::TapService service(cfg.listen, cfg.upstream);
  service.start();
  ctx.note("serve-tap: listening on " + service.address() + ", upstream " +
           cfg.upstream);
  install_signal_handlers();
  wait_for_stop(cfg.duration);
  service.stop();
  service.write_capture(ctx.path("capture.bin").string());
  ctx.note("serve-tap: wrote " + ctx.path("capture.bin").string());
  return kExitOk;
}

int cmd_send(const RunConfig& cfg, const std::string& run_dir,
             const std::string& corpus_path, const std::string& edge_addr) {
  RunContext ctx(resolve_run_dir(run_dir, "send"));
  write_effective_config(ctx, "send", cfg,
                         {{"corpus", corpus_path}, {"edge", edge_addr}});
  const peec::Corpus corpus = load_corpus(corpus_path, cfg);
  const auto transcript =
      peec::net::run_sensor(corpus, edge_addr, cfg.rate_limit);
  ctx.write_text("transcript.csv", peec::net::transcript_csv(transcript));
  size_t ok = 0;
  for (const auto& row : transcript) {
    if (row.error.empty()) ++ok;
  }
  ctx.note("send: " + std::to_string(ok) + "/" +
           std::to_string(transcript.size()) + " utterances classified");
  if (ok == 0 && !transcript.empty()) {
    throw peec::NetworkError("no utterance reached the pipeline (first error: " +
                             transcript.front().error + ")");
  }
  return kExitOk;
}

int cmd_audit(const RunConfig&, const std::string& run_dir,
              const std::string& capture_path, size_t raw_dim,
              size_t latent_dim) {
  RunContext ctx(resolve_run_dir(run_dir, "audit"));
  write_effective_config(ctx, "audit", RunConfig{},
                         {{"capture", capture_path},
                          {"raw_dim", raw_dim},
                          {"latent_dim", latent_dim}});
  const peec::net::AuditResult result =
      peec::net::audit_leakage(capture_path, raw_dim, latent_dim);
  std::string text = "verdict=" + result.verdict() +
                     " frames=" + std::to_string(result.n_frames) +
                     " latent=" + std::to_string(result.n_latent) +
                     " features=" + std::to_string(result.n_features) +
                     " raw_dim_payloads=" + std::to_string(result.n_raw_dim) +
                     "\n";
  for (const auto& v : result.violations) text += v + '\n';
  ctx.write_text("audit.txt", text);
  ctx.note("audit: " + text.substr(0, text.find('\n')));
  return result.pass ? kExitOk : kExitAuditFail;
}

int cmd_gradcheck(const RunConfig& cfg, const std::string& run_dir) {
  RunContext ctx(resolve_run_dir(run_dir, "gradcheck"));
  write_effective_config(ctx, "gradcheck", cfg, json::object());

  // Tiny composite model: every differentiable piece (dense, leaky-ReLU,
  // gradient reversal, reconstruction + cross-entropy losses) in one graph.
  peec::ModelArch arch;
  arch.enc_hidden1 = 16;
  arch.enc_hidden2 = 12;
  arch.head_hidden = 10;
  arch.dropout = 0.0; // finite differences need a deterministic forward pass
  auto model = peec::PrivacyEncoderModel::build(20, 6, 3, 2, 0.7, cfg.seed,
                                                arch);
  peec::RandomSource rs(peec::derive_seed(cfg.seed, 0xda7a));
  const peec::Matrix x = peec::rand_uniform(rs, 5, 20, 0.0, 1.0);
  peec::BatchLabels labels;
  for (size_t i = 0; i < 5; ++i) {
    labels.speaker.push_back(rs.index(3));
    labels.gender.push_back(rs.index(2));
    labels.language.push_back(rs.index(2));
  }

  // The training step is a min-max update, so no single scalar has all the
  // parameter gradients: encoder and decoder descend the composite value
  // (reconstruction minus the weighted adversary losses), while each head
  // descends its own cross-entropy. Check the two groups against their own
  // objectives.
  const auto backward = [&] {
    model.zero_grads();
    model.forward_backward(x, labels, peec::nn::Mode::Infer, nullptr);
  };

  peec::nn::GradCheckTarget trunk;
  trunk.loss = [&] { return model.composite_loss(x, labels).value; };
  trunk.backward = backward;
  trunk.params = model.encoder_params();
  for (auto& p : model.decoder_params()) trunk.params.push_back(p);
  const double err_trunk = peec::nn::grad_check(trunk, 1e-5);

  peec::nn::GradCheckTarget heads;
  heads.loss = [&] {
    const auto s = model.composite_loss(x, labels);
    return s.speaker_loss + s.gender_loss + s.language_loss;
  };
  heads.backward = backward;
  for (auto* head :
       {&model.speaker_head, &model.gender_head, &model.language_head}) {
    for (auto& p : head->params()) heads.params.push_back(p);
  }
  const double err_heads = peec::nn::grad_check(heads, 1e-5);
  const double err = std::max(err_trunk, err_heads);

  ctx.note("gradcheck: max relative error " + peec::detail::format_double(err) +
           " (threshold 1e-4)");
  ctx.write_text("gradcheck.txt",
                 "max_relative_error=" + peec::detail::format_double(err) + "\n");
  if (!(err < 1e-4)) {
    throw peec::NumericError("gradient check failed: max relative error " +
                             peec::detail::format_double(err) + " >= 1e-4");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// main
// ---------------------------------------------------------------------------

std::optional<std::string> prescan_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return std::nullopt;
}

} // namespace

int main(int argc, char** argv) {
  try {
    RunConfig cfg;
    if (const auto config_path = prescan_config_path(argc, argv)) {
      json parsed;
      try {
        parsed = json::parse(peec::bytes::read_text_file(*config_path));
      } catch (const json::exception& e) {
        throw UsageError(std::string("config file is not valid JSON: ") +
                         e.what());
      }
      cfg = config_from_json(parsed);
    }

    CLI::App app{"privacy-enhanced emotion coding toolkit"};
    app.require_subcommand(1);
    std::string config_path_flag; // consumed by the prescan; declared for help
    app.add_option("--config", config_path_flag,
                   "JSON config file; flags override its values");

    bool print_config = false;
    std::string run_dir;
    std::string corpus_path, model_path, svm_path, capture_path;
    std::string method = "proposed", attribute = "gender";
    std::string edge_addr = "127.0.0.1:7601";
    bool fit_svm = false;
    size_t raw_dim = 0, latent_dim_flag = 0;

    const auto add_common = [&](CLI::App* cmd) {
      cmd->add_option("--config", config_path_flag,
                      "JSON config file; flags override its values");
      cmd->add_flag("--print-config", print_config,
                    "print the effective config as JSON and exit");
      cmd->add_option("--run-dir", run_dir,
                      "output directory (default $PEEC_RUN_ROOT/<subcommand> "
                      "or ./runs/<subcommand>)");
      cmd->add_option("--seed", cfg.seed, "master random seed");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    add_common(synth);
    synth->add_option("--n-per-cell", cfg.corpus_n_per_cell,
                      "utterances per (valence,gender,speaker,language) cell");
    synth->add_option("--dim", cfg.corpus_dim, "feature dimension");
    synth->add_option("--speakers", cfg.corpus_speakers, "speaker count");
    synth->add_option("--languages", cfg.corpus_languages, "language count");
    synth->add_option("--noise-std", cfg.noise_std, "additive noise sigma");

    auto* train = app.add_subcommand("train", "train the adversarial model");
    add_common(train);
    train->add_option("--corpus", corpus_path, "corpus file (.csv or .arff)")
        ->required();
    train->add_option("--epochs", cfg.epochs, "training epochs");
    train->add_option("--batch-size", cfg.batch_size, "mini-batch size");
    train->add_option("--latent-dim", cfg.latent_dim, "latent width L");
    train->add_option("--alpha", cfg.alpha, "adversarial trade-off weight");
    train->add_option("--learning-rate", cfg.learning_rate, "optimizer step");
    train->add_flag("--fit-svm", fit_svm,
                    "also fit the valence SVM on the training latents");

    auto* encode = app.add_subcommand("encode", "encode a corpus to latents");
    add_common(encode);
    encode->add_option("--corpus", corpus_path, "corpus file")->required();
    encode->add_option("--model", model_path, "trained model file")->required();

    auto* pca = app.add_subcommand("pca", "principal-component baseline");
    add_common(pca);
    pca->add_option("--corpus", corpus_path, "corpus file")->required();
    pca->add_option("--latent-dim", cfg.latent_dim, "component count");

    auto* eval_loso =
        app.add_subcommand("eval-loso", "leave-one-speaker-out emotion UAR");
    add_common(eval_loso);
    eval_loso->add_option("--corpus", corpus_path, "corpus file")->required();
    eval_loso->add_option("--method", method, "raw | ae | pca | proposed");
    eval_loso->add_option("--repeats", cfg.loso_repeats, "repeat count");
    eval_loso->add_option("--epochs", cfg.epochs, "encoder epochs");
    eval_loso->add_option("--latent-dim", cfg.latent_dim, "latent width");
    eval_loso->add_option("--alpha", cfg.alpha, "adversarial weight");
    eval_loso->add_option("--learning-rate", cfg.learning_rate,
                          "optimizer step");

    auto* attack =
        app.add_subcommand("attack", "attribute / membership inference");
    add_common(attack);
    attack->add_option("--corpus", corpus_path, "corpus file")->required();
    attack->add_option("--method", method, "raw | ae | pca | proposed");
    attack->add_option("--attribute", attribute,
                       "gender | language | membership");
    attack->add_option("--epochs", cfg.epochs, "encoder epochs");
    attack->add_option("--latent-dim", cfg.latent_dim, "latent width");
    attack->add_option("--alpha", cfg.alpha, "adversarial weight");
    attack->add_option("--learning-rate", cfg.learning_rate, "optimizer step");

    auto* report =
        app.add_subcommand("report", "four-method utility/privacy comparison");
    add_common(report);
    report->add_option("--corpus", corpus_path, "corpus file")->required();
    report->add_option("--epochs", cfg.epochs, "encoder epochs");
    report->add_option("--latent-dim", cfg.latent_dim, "latent width");
    report->add_option("--alpha", cfg.alpha, "adversarial weight");
    report->add_option("--learning-rate", cfg.learning_rate, "optimizer step");
    report->add_option("--repeats", cfg.loso_repeats, "LOSO repeats");

    auto* sweep = app.add_subcommand("sweep", "latent-dimension sweep");
    add_common(sweep);
    sweep->add_option("--corpus", corpus_path, "corpus file")->required();
    sweep->add_option("--dims", cfg.sweep_dims, "latent dims to test");
    sweep->add_option("--epochs", cfg.epochs, "encoder epochs");
    sweep->add_option("--alpha", cfg.alpha, "adversarial weight");
    sweep->add_option("--learning-rate", cfg.learning_rate, "optimizer step");
    sweep->add_option("--repeats", cfg.loso_repeats, "LOSO repeats");

    auto* serve_cloud =
        app.add_subcommand("serve-cloud", "run the cloud classifier service");
    add_common(serve_cloud);
    serve_cloud->add_option("--svm", svm_path, "SVM model file")->required();
    serve_cloud->add_option("--listen", cfg.listen, "host:port to bind");
    serve_cloud->add_option("--duration", cfg.duration,
                            "seconds to serve (0 = until SIGINT/SIGTERM)");

    auto* serve_edge =
        app.add_subcommand("serve-edge", "run the edge encoder service");
    add_common(serve_edge);
    serve_edge->add_option("--model", model_path, "trained model file")
        ->required();
    serve_edge->add_option("--listen", cfg.listen, "host:port to bind");
    serve_edge->add_option("--cloud", cfg.cloud, "cloud service address");
    serve_edge->add_flag("--passthrough", cfg.passthrough,
                         "TEST ONLY: forward raw FEATURES upstream");
    serve_edge->add_option("--duration", cfg.duration,
                           "seconds to serve (0 = until SIGINT/SIGTERM)");

    auto* serve_tap = app.add_subcommand(
        "serve-tap", "record the edge->cloud leg (eavesdropper tap)");
    add_common(serve_tap);
    serve_tap->add_option("--listen", cfg.listen, "host:port to bind");
    serve_tap->add_option("--upstream", cfg.upstream, "where to forward");
    serve_tap->add_option("--duration", cfg.duration,
                          "seconds to serve (0 = until SIGINT/SIGTERM)");

    auto* send = app.add_subcommand("send", "stream a corpus through the edge");
    add_common(send);
    send->add_option("--corpus", corpus_path, "corpus file")->required();
    send->add_option("--edge", edge_addr, "edge service address");
    send->add_option("--rate-limit", cfg.rate_limit,
                     "frames per second (0 = unpaced)");

    auto* audit = app.add_subcommand("audit", "leakage audit of a capture");
    add_common(audit);
    audit->add_option("--capture", capture_path, "capture file")->required();
    audit->add_option("--raw-dim", raw_dim, "protected raw feature dim D")
        ->required();
    audit->add_option("--latent-dim", latent_dim_flag, "expected latent dim L")
        ->required();

    auto* gradcheck = app.add_subcommand(
        "gradcheck", "finite-difference check of all gradients");
    add_common(gradcheck);

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e);
      return rc == 0 ? kExitOk : kExitUsage;
    }

    if (print_config) {
      json j;
      j["config"] = config_to_json(cfg);
      std::cout << j.dump(2) << '\n';
      return kExitOk;
    }

    if (synth->parsed()) return cmd_synth(cfg, run_dir);
    if (train->parsed()) return cmd_train(cfg, run_dir, corpus_path, fit_svm);
    if (encode->parsed()) return cmd_encode(cfg, run_dir, corpus_path, model_path);
    if (pca->parsed()) return cmd_pca(cfg, run_dir, corpus_path);
    if (eval_loso->parsed())
      return cmd_eval_loso(cfg, run_dir, corpus_path, method);
    if (attack->parsed())
      return cmd_attack(cfg, run_dir, corpus_path, method, attribute);
    if (report->parsed()) return cmd_report(cfg, run_dir, corpus_path);
    if (sweep->parsed()) return cmd_sweep(cfg, run_dir, corpus_path);
    if (serve_cloud->parsed()) return cmd_serve_cloud(cfg, run_dir, svm_path);
    if (serve_edge->parsed()) return cmd_serve_edge(cfg, run_dir, model_path);
    if (serve_tap->parsed()) return cmd_serve_tap(cfg, run_dir);
    if (send->parsed()) return cmd_send(cfg, run_dir, corpus_path, edge_addr);
    if (audit->parsed())
      return cmd_audit(cfg, run_dir, capture_path, raw_dim, latent_dim_flag);
    if (gradcheck->parsed()) return cmd_gradcheck(cfg, run_dir);
    std::cerr << "error: usage: no subcommand\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const peec::NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const peec::NetworkError& e) {
    std::cerr << "error: network: " << e.what() << '\n';
    return kExitNetwork;
  } catch (const peec::Error& e) {
    std::cerr << "error: data: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return kExitData;
  }
}
