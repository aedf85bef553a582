// kstone_cli: command-line front end for the patch / feature / ensemble
// pipeline. Every stage writes its artifact plus a JSON sidecar holding the
// full configuration, seed, tool version and input digests.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "kstone/kstone.hpp"

namespace {

using namespace kstone;
using nlohmann::json;

constexpr const char* kToolName = "kstone";
constexpr const char* kToolVersion = "1.0.0";
constexpr const char* kOutputRootEnv = "KSTONE_OUTPUT_ROOT";

// ---------------------------------------------------------------------------
// Digests

std::string hex(const unsigned char* p, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < n; ++i) {
    s += digits[p[i] >> 4];
    s += digits[p[i] & 15];
  }
  return s;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) fail(errc::kIo, "sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::string hex_digest() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned n = 0;
    EVP_DigestFinal_ex(ctx_, out, &n);
    return hex(out, n);
  }

 private:
  EVP_MD_CTX* ctx_;
};

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::kIo, "cannot read " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex_digest();
}

constexpr const char* kSidecarName = "meta.json";

// Digest of every regular file below dir (sidecars excluded), in path order.
std::string tree_digest(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel == kSidecarName || rel.ends_with(".meta.json")) continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) h.update(f + '\t' + file_digest(dir / f) + '\n');
  return h.hex_digest();
}

json input_record(const fs::path& path) {
  if (fs::is_directory(path)) return {{"path", path.generic_string()}, {"tree_sha256", tree_digest(path)}};
  return {{"path", path.generic_string()}, {"sha256", file_digest(path)}};
}

// Corpus inputs: the manifest plus every image and mask it names.
json manifest_record(const fs::path& manifest_path, const CorpusManifest& m) {
  Sha256 h;
  h.update(file_digest(manifest_path) + '\n');
  for (const auto& e : m.entries) {
    h.update(file_digest(resolve(m.base_dir, e.image_path)) + '\t' + file_digest(resolve(m.base_dir, e.mask_path)) +
             '\n');
  }
  return {{"path", manifest_path.generic_string()}, {"corpus_sha256", h.hex_digest()}};
}

void write_sidecar(const fs::path& path, const std::string& command, const json& config, std::uint64_t seed,
                   const json& inputs, const json& outputs) {
  json j{{"tool", kToolName},
         {"tool_version", kToolVersion},
         {"command", command},
         {"seed", seed},
         {"config", config},
         {"inputs", inputs},
         {"outputs", outputs}};
  detail::write_text(path, j.dump(2) + "\n");
}

fs::path sidecar_for_file(const fs::path& artifact) { return fs::path(artifact.string() + ".meta.json"); }

// ---------------------------------------------------------------------------
// Options

struct Common {
  std::size_t workers = 1;
  std::uint64_t seed = 0;
};

fs::path output_root() {
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return "kstone-out";
}

fs::path output_or_default(const std::string& given, const std::string& stage) {
  return given.empty() ? output_root() / stage : fs::path(given);
}

template <typename T>
T require(std::optional<T> v, const std::string& what, const std::string& token) {
  if (!v) fail(errc::kUnknownToken, "unknown " + what + " '" + token + "'");
  return *v;
}

struct LearnerOpts {
  std::string preset = "desk";
  std::string kind = "random_forest";
  std::string preset_file;
  int n_estimators = 0;  // 0: keep the preset value

  EnsembleParams resolve(std::uint64_t seed) const {
    const auto p = require(parse_preset(preset), "preset", preset);
    const auto k = require(parse_ensemble_kind(kind), "learner kind", kind);
    EnsembleParams params = preset_params(p, k, seed);
    if (!preset_file.empty()) {
      json j;
      try {
        j = json::parse(detail::read_text(preset_file));
      } catch (const json::parse_error& e) {
        fail(errc::kParse, preset_file + ": " + e.what());
      }
      const std::string key(to_string(k));
      if (j.contains(key)) {
        params = params_from_json(j.at(key), params);
      } else if (j.contains("kind")) {
        params = params_from_json(j, params);
      } else {
        fail(errc::kInvalidArgument, preset_file + " has no entry for " + key);
      }
      params.kind = k;
      params.seed = seed;
    }
    if (n_estimators > 0) params.n_estimators = n_estimators;
    params.validate();
    return params;
  }

  void add_to(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Hyperparameter preset: desk or paper")->capture_default_str();
    cmd->add_option("--kind", kind, "random_forest | bagging | adaboost | gradient_boosting (rf, gbt)")
        ->capture_default_str();
    cmd->add_option("--preset-file", preset_file, "JSON file overriding preset fields, keyed by kind");
    cmd->add_option("--n-estimators", n_estimators, "Override the preset ensemble size");
  }
};

FeatureSet load_feature_file(const std::string& path) {
  if (path.empty()) fail(errc::kInvalidArgument, "--features is required");
  return read_features(path);
}

// Report directory: report.tsv, confusion.txt, summary.txt, class_f1.svg.
json write_report_dir(const fs::path& dir, const std::vector<ReportRow>& rows,
                      const std::map<std::string, std::string>& header) {
  fs::create_directories(dir);
  detail::write_text(dir / "report.tsv", format_report_table(rows, header));
  detail::write_text(dir / "confusion.txt", format_confusion(rows));
  detail::write_text(dir / "summary.txt", format_summary(rows));
  detail::write_text(dir / "class_f1.svg", svg_class_bars(rows));
  return json::array({"report.tsv", "confusion.txt", "summary.txt", "class_f1.svg"});
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthOpts {
  std::string out;
  int images = 25;
  int image_size = 640;
  std::string recipes = "standard";
  double instrument_probability = 0.0;
};

int cmd_synth(const SynthOpts& o, const Common& c) {
  const fs::path out = output_or_default(o.out, "corpus");
  std::vector<ClassRecipe> recipes;
  if (o.recipes == "standard") recipes = standard_recipes();
  else if (o.recipes == "identical") recipes = identical_recipes();
  else fail(errc::kUnknownToken, "unknown recipe set '" + o.recipes + "'");
  SynthOptions so;
  so.instrument_probability = o.instrument_probability;
  so.workers = c.workers;
  const auto m = generate_corpus(recipes, o.image_size, o.images, c.seed, out, so);
  json config{{"images_per_class_per_view", o.images},
              {"image_size", o.image_size},
              {"recipes", o.recipes},
              {"instrument_probability", o.instrument_probability}};
  write_sidecar(out / kSidecarName, "synth", config, c.seed, json::array(),
                {{"manifest", "manifest.tsv"}, {"entries", m.entries.size()}, {"tree_sha256", tree_digest(out)}});
  std::cout << "wrote " << m.entries.size() << " images to " << out.generic_string() << "\n";
  return 0;
}

struct ExtractOpts {
  std::string manifest;
  std::string out;
  int patch_side = 256;
  int max_overlap = 20;
  double max_non_stone = 0.10;
  int lbp_window = 5;
};

json grid_json(const GridParams& g) {
  return {{"patch_side", g.patch_side}, {"max_overlap", g.max_overlap}, {"max_non_stone_fraction", g.max_non_stone_fraction}};
}

GridParams checked_grid(int side, int overlap, double non_stone, int lbp_window, std::uint64_t seed) {
  LbpParams lbp{lbp_window};
  lbp.validate();
  const int min_side = std::max(3, lbp.window_side);
  if (side < min_side) {
    fail(errc::kInvalidArgument, "patch side " + std::to_string(side) + " below feature minimum " +
                                     std::to_string(min_side));
  }
  GridParams g{side, overlap, non_stone, seed};
  g.validate();
  return g;
}

int cmd_extract(const ExtractOpts& o, const Common& c) {
  const auto grid = checked_grid(o.patch_side, o.max_overlap, o.max_non_stone, o.lbp_window, c.seed);
  if (o.manifest.empty()) fail(errc::kInvalidArgument, "--manifest is required");
  const fs::path out = output_or_default(o.out, "patches");
  const auto manifest = load_manifest(o.manifest);
  const auto inputs = json::array({manifest_record(o.manifest, manifest)});
  std::vector<PatchRecord> records;
  for (const auto& e : manifest.entries) {
    const auto pair = load_image_pair(e, manifest.base_dir);
    auto p = extract_patch_grid(pair.image, pair.mask, grid, {e.cls, e.view, e.stone_id});
    records.insert(records.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  if (fs::exists(out / kPatchIndexName)) fs::remove_all(out);
  save_patches(records, out);
  write_sidecar(out / kSidecarName, "extract", {{"grid", grid_json(grid)}, {"lbp_window", o.lbp_window}}, c.seed,
                inputs, {{"index", kPatchIndexName}, {"patches", records.size()}});
  std::cout << "extracted " << records.size() << " patches to " << out.generic_string() << "\n";
  return 0;
}

struct BalanceOpts {
  std::string patches;
  std::string manifest;
  std::string out;
  std::string mode = "under";
  bool augment = false;
  int max_overlap = 20;
  double max_non_stone = 0.10;
};

int cmd_balance(const BalanceOpts& o, const Common& c) {
  BalanceMode mode;
  if (o.mode == "over") mode = BalanceMode::OverSample;
  else if (o.mode == "under") mode = BalanceMode::UnderSample;
  else fail(errc::kUnknownToken, "unknown balance mode '" + o.mode + "'");
  if (o.patches.empty()) fail(errc::kInvalidArgument, "--patches is required");
  if (mode == BalanceMode::OverSample && o.manifest.empty()) {
    fail(errc::kInvalidArgument, "over-sampling draws new patches and needs --manifest");
  }
  const fs::path out = output_or_default(o.out, "balanced");
  json inputs = json::array({input_record(o.patches)});
  auto records = load_patches(o.patches);
  if (records.empty()) fail(errc::kInvalidArgument, "patch directory " + o.patches + " is empty");
  ImageStore store;
  if (!o.manifest.empty()) {
    const auto m = load_manifest(o.manifest);
    inputs.push_back(manifest_record(o.manifest, m));
    store = build_image_store(m);
  }
  GridParams grid{records.front().side(), o.max_overlap, o.max_non_stone, c.seed};
  grid.validate();
  auto balanced = balance(records, mode, store, grid);
  if (o.augment) {
    std::vector<PatchRecord> aug;
    aug.reserve(balanced.size() * kAugmentMultiplicity);
    for (const auto& r : balanced) {
      auto v = augment(r);
      aug.insert(aug.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
    }
    balanced = std::move(aug);
  }
  if (fs::exists(out / kPatchIndexName)) fs::remove_all(out);
  save_patches(balanced, out);
  write_sidecar(out / kSidecarName, "balance",
                {{"mode", o.mode}, {"augment", o.augment}, {"grid", grid_json(grid)}}, c.seed, inputs,
                {{"index", kPatchIndexName}, {"patches", balanced.size()}});
  std::cout << "wrote " << balanced.size() << " patches to " << out.generic_string() << "\n";
  return 0;
}

struct FeaturizeOpts {
  std::string patches;
  std::string out;
  std::string view = "surface";
  std::string combo = "LBP+eHSV";
  int lbp_window = 5;
};

// Class/view pairs listed in a patch index, read without decoding images.
std::set<std::pair<std::string, std::string>> indexed_class_views(const fs::path& dir) {
  const fs::path index = dir / kPatchIndexName;
  if (!fs::exists(index)) fail(errc::kIo, "patch index not found: " + index.string());
  std::set<std::pair<std::string, std::string>> out;
  std::istringstream in(detail::read_text(index));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto f = detail::split(detail::trim_cr(line), '\t');
    if (f.size() >= 3) out.insert({to_upper(f[1]), to_upper(f[2])});
  }
  return out;
}

int cmd_featurize(const FeaturizeOpts& o, const Common& c) {
  const auto view = require(parse_feature_view(o.view), "view mode", o.view);
  const auto combo = parse_combo(o.combo);
  LbpParams lbp{o.lbp_window};
  lbp.validate();
  if (o.patches.empty()) fail(errc::kInvalidArgument, "--patches is required");
  const auto present = indexed_class_views(o.patches);
  if (view == FeatureView::Mixed) {
    for (const auto& [cls, v] : present) {
      const std::string other = v == "SURFACE" ? "SECTION" : "SURFACE";
      if (!present.count({cls, other})) {
        fail(errc::kInvalidArgument, "mixed view needs surface and section patches; class " + cls + " has only " + v);
      }
    }
  } else if (!std::any_of(present.begin(), present.end(), [&](const auto& p) { return p.second == to_string(view); })) {
    fail(errc::kInvalidArgument, "no " + std::string(to_string(view)) + " patches in " + o.patches);
  }
  const fs::path out = o.out.empty() ? output_root() / "features.tsv" : fs::path(o.out);
  const auto inputs = json::array({input_record(o.patches)});
  const auto records = load_patches(o.patches);
  for (const auto& r : records) {
    if (r.side() < std::max(3, lbp.window_side)) {
      fail(errc::kInvalidArgument, "patch side " + std::to_string(r.side()) + " below feature minimum");
    }
  }
  const auto all = featurize_all(records, lbp, c.workers);
  FeatureSet set;
  set.combo = combo;
  set.lbp = lbp;
  for (const auto& v : vectors_for_view(all, view, c.seed)) set.vectors.push_back(select_features(v, combo));
  if (set.vectors.empty()) fail(errc::kInvalidArgument, "no feature vectors produced");
  write_features(set, out);
  write_sidecar(sidecar_for_file(out), "featurize",
                {{"view", std::string(to_string(view))}, {"combo", to_string(combo)}, {"lbp_window", lbp.window_side},
                 {"lbp_points", kLbpPoints}, {"lbp_mapping", "riu2"}},
                c.seed, inputs, {{"vectors", set.vectors.size()}, {"dim", set.dim()}, {"sha256", file_digest(out)}});
  std::cout << "wrote " << set.vectors.size() << " x " << set.dim() << " features to " << out.generic_string()
            << "\n";
  return 0;
}

struct TrainOpts {
  std::string features;
  std::string out;
  LearnerOpts learner;
};

int cmd_train(const TrainOpts& o, const Common& c) {
  const auto params = o.learner.resolve(c.seed);
  const auto set = load_feature_file(o.features);
  const auto m = to_matrix(set.vectors);
  const fs::path out = o.out.empty() ? output_root() / "model.json" : fs::path(o.out);
  const auto model = train_ensemble(m.x, m.y, class_names(), params, c.workers);
  save_model(model, out);
  write_sidecar(sidecar_for_file(out), "train",
                {{"preset", o.learner.preset}, {"params", params_to_json(params)}, {"combo", to_string(set.combo)}},
                c.seed, json::array({input_record(o.features)}),
                {{"n_estimators", params.n_estimators}, {"trees", model.trees.size()}, {"sha256", file_digest(out)}});
  std::cout << "trained " << to_string(params.kind) << " with " << params.n_estimators << " estimators -> "
            << out.generic_string() << "\n";
  return 0;
}

struct EvaluateOpts {
  std::string features;
  std::string model;
  std::string out;
  std::size_t k = 5;
  std::string grouping = "per-patch";
  LearnerOpts learner;
};

int cmd_evaluate(const EvaluateOpts& o, const Common& c) {
  const auto grouping = require(parse_grouping(o.grouping), "grouping", o.grouping);
  const auto set = load_feature_file(o.features);
  const fs::path out = output_or_default(o.out, "report");
  json inputs = json::array({input_record(o.features)});
  json config{{"combo", to_string(set.combo)}, {"lbp_window", set.lbp.window_side}};
  EvalReport report;
  if (!o.model.empty()) {
    inputs.push_back(input_record(o.model));
    const auto model = load_model(o.model);
    const auto m = to_matrix(set.vectors);
    if (model.classes != class_names()) fail(errc::kInvalidArgument, "model classes differ from WW, WD, UA, BRU");
    report = compute_metrics(m.y, predict(model, m.x), model.classes);
    report.metadata["learner"] = std::string(to_string(model.kind));
    report.metadata["n_estimators"] = std::to_string(model.params.n_estimators);
    config["mode"] = "holdout";
  } else {
    const auto params = o.learner.resolve(c.seed);
    report = cross_validate(set.vectors, params, o.k, grouping, c.seed, c.workers);
    config["mode"] = "cross_validation";
    config["k"] = o.k;
    config["grouping"] = o.grouping;
    config["preset"] = o.learner.preset;
    config["params"] = params_to_json(params);
  }
  report.metadata["combo"] = to_string(set.combo);
  report.metadata["lbp_window"] = std::to_string(set.lbp.window_side);
  const auto view = set.vectors.empty() ? "" : std::string(to_string(set.vectors.front().view));
  std::vector<ReportRow> rows{{{{"combo", to_string(set.combo)}, {"view", view}}, report}};
  const auto files = write_report_dir(out, rows, {});
  write_sidecar(out / kSidecarName, "evaluate", config, c.seed, inputs, files);
  std::printf("weighted P %.4f R %.4f F1 %.4f accuracy %.4f -> %s\n", report.weighted_precision,
              report.weighted_recall, report.weighted_f1, report.accuracy, out.generic_string().c_str());
  return 0;
}

struct AblateOpts {
  std::string manifest;
  std::string out;
  std::vector<std::string> combos;
  std::vector<int> sides{64, 128, 256};
  std::vector<std::string> views{"surface", "section", "mixed"};
  std::string balance;
  std::size_t k = 5;
  std::string grouping = "per-patch";
  int lbp_window = 5;
  int max_overlap = 20;
  double max_non_stone = 0.10;
  LearnerOpts learner;
};

int cmd_ablate(const AblateOpts& o, const Common& c) {
  AblationAxes axes;
  if (o.combos.empty()) {
    axes.combos = descriptor_table_combos();
  } else {
    for (const auto& s : o.combos) axes.combos.push_back(parse_combo(s));
  }
  for (const auto& v : o.views) axes.views.push_back(require(parse_feature_view(v), "view mode", v));
  axes.patch_sides = o.sides;
  for (int side : axes.patch_sides) checked_grid(side, o.max_overlap, o.max_non_stone, o.lbp_window, c.seed);
  AblationConfig cfg;
  cfg.grid = {256, o.max_overlap, o.max_non_stone, c.seed};
  cfg.lbp = {o.lbp_window};
  cfg.params = o.learner.resolve(c.seed);
  cfg.k = o.k;
  cfg.grouping = require(parse_grouping(o.grouping), "grouping", o.grouping);
  cfg.seed = c.seed;
  cfg.workers = c.workers;
  if (o.balance == "over") cfg.balance = BalanceMode::OverSample;
  else if (o.balance == "under") cfg.balance = BalanceMode::UnderSample;
  else if (!o.balance.empty()) fail(errc::kUnknownToken, "unknown balance mode '" + o.balance + "'");
  if (o.manifest.empty()) fail(errc::kInvalidArgument, "--manifest is required");

  const fs::path out = output_or_default(o.out, "ablation");
  const auto manifest = load_manifest(o.manifest);
  const auto inputs = json::array({manifest_record(o.manifest, manifest)});
  const auto store = build_image_store(manifest);
  const auto cells = run_ablation(store, axes, cfg, [](const AblationCell& cell) {
    std::fprintf(stderr, "side %d %s %s: weighted F1 %.4f\n", cell.patch_side,
                 std::string(to_string(cell.view)).c_str(), to_string(cell.combo).c_str(), cell.report.weighted_f1);
  });
  const auto rows = rows_from_cells(cells);
  auto files = write_report_dir(out, rows, {});
  detail::write_text(out / "patch_size.svg", svg_patch_size_plot(cells));
  files.push_back("patch_size.svg");
  json config{{"combos", json::array()},
              {"patch_sides", o.sides},
              {"views", o.views},
              {"balance", o.balance.empty() ? "none" : o.balance},
              {"k", o.k},
              {"grouping", o.grouping},
              {"lbp_window", o.lbp_window},
              {"grid", {{"max_overlap", o.max_overlap}, {"max_non_stone_fraction", o.max_non_stone}}},
              {"preset", o.learner.preset},
              {"params", params_to_json(cfg.params)}};
  for (auto cb : axes.combos) config["combos"].push_back(to_string(cb));
  write_sidecar(out / kSidecarName, "ablate", config, c.seed, inputs, files);
  std::cout << "ablation: " << cells.size() << " cells -> " << out.generic_string() << "\n";
  return 0;
}

struct EmbedOpts {
  std::string features;
  std::string out;
  std::size_t dim = 3;
};

int cmd_embed(const EmbedOpts& o, const Common& c) {
  const auto set = load_feature_file(o.features);
  const fs::path out = o.out.empty() ? output_root() / "embedding.tsv" : fs::path(o.out);
  const auto e = pca_project(set.vectors, o.dim);
  detail::write_text(out, format_embedding(e));
  write_sidecar(sidecar_for_file(out), "embed",
                {{"method", "pca"}, {"out_dim", o.dim}, {"combo", to_string(set.combo)}}, c.seed,
                json::array({input_record(o.features)}),
                {{"explained_variance", e.explained_variance}, {"rank_deficient", e.rank_deficient},
                 {"sha256", file_digest(out)}});
  std::cout << "embedded " << e.coords.rows << " vectors -> " << out.generic_string() << "\n";
  return 0;
}

std::string quoted(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch == '\n' ? ' ' : ch;
  }
  return out;
}

int report_error(const std::string& code, const std::string& message) {
  std::cerr << "error: code=" << code << " message=\"" << quoted(message) << "\"\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kidney-stone patch classification pipeline"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--workers", common.workers, "Worker threads; results do not depend on it")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}))
      ->capture_default_str();
  app.add_option("--seed", common.seed, "Master seed")->capture_default_str();

  SynthOpts synth;
  auto* c_synth = app.add_subcommand("synth", "Generate the synthetic four-class corpus");
  c_synth->add_option("-o,--out", synth.out, "Corpus directory");
  c_synth->add_option("--images", synth.images, "Images per class and view")->capture_default_str();
  c_synth->add_option("--image-size", synth.image_size, "Image side in pixels")->capture_default_str();
  c_synth->add_option("--recipes", synth.recipes, "standard | identical")->capture_default_str();
  c_synth->add_option("--instrument-probability", synth.instrument_probability,
                      "Chance of stamping a blue instrument bar per image");

  ExtractOpts extract;
  auto* c_extract = app.add_subcommand("extract", "Cut the regular patch grid from every stone");
  c_extract->add_option("--manifest", extract.manifest, "Corpus manifest (TSV)");
  c_extract->add_option("-o,--out", extract.out, "Patch directory");
  c_extract->add_option("--patch-side", extract.patch_side, "64 | 128 | 200 | 256 | 512")->capture_default_str();
  c_extract->add_option("--max-overlap", extract.max_overlap, "Overlap between strided patches")->capture_default_str();
  c_extract->add_option("--max-non-stone", extract.max_non_stone, "Rejection threshold")->capture_default_str();
  c_extract->add_option("--lbp-window", extract.lbp_window, "LBP window used downstream")->capture_default_str();

  BalanceOpts bal;
  auto* c_balance = app.add_subcommand("balance", "Equalize class counts per view");
  c_balance->add_option("--patches", bal.patches, "Input patch directory");
  c_balance->add_option("--manifest", bal.manifest, "Corpus manifest (needed for over-sampling)");
  c_balance->add_option("-o,--out", bal.out, "Output patch directory");
  c_balance->add_option("--mode", bal.mode, "over | under")->capture_default_str();
  c_balance->add_flag("--augment", bal.augment, "Add the 8 geometric variants of every patch");
  c_balance->add_option("--max-overlap", bal.max_overlap)->capture_default_str();
  c_balance->add_option("--max-non-stone", bal.max_non_stone)->capture_default_str();

  FeaturizeOpts feat;
  auto* c_feat = app.add_subcommand("featurize", "Compute energy and LBP descriptors");
  c_feat->add_option("--patches", feat.patches, "Patch directory");
  c_feat->add_option("-o,--out", feat.out, "Feature file");
  c_feat->add_option("--view", feat.view, "surface | section | mixed")->capture_default_str();
  c_feat->add_option("--combo", feat.combo, "Blocks, e.g. LBP+eHSV or eH,eS")->capture_default_str();
  c_feat->add_option("--lbp-window", feat.lbp_window, "5 | 7 | 9")->capture_default_str();

  TrainOpts train;
  auto* c_train = app.add_subcommand("train", "Fit a tree ensemble on a feature file");
  c_train->add_option("--features", train.features, "Feature file");
  c_train->add_option("-o,--out", train.out, "Model file");
  train.learner.add_to(c_train);

  EvaluateOpts eval;
  auto* c_eval = app.add_subcommand("evaluate", "Cross-validate, or score a saved model");
  c_eval->add_option("--features", eval.features, "Feature file");
  c_eval->add_option("--model", eval.model, "Score this model instead of cross-validating");
  c_eval->add_option("-o,--out", eval.out, "Report directory");
  c_eval->add_option("--k", eval.k, "Folds")->capture_default_str();
  c_eval->add_option("--grouping", eval.grouping, "per-patch | per-stone")->capture_default_str();
  eval.learner.add_to(c_eval);

  AblateOpts abl;
  auto* c_abl = app.add_subcommand("ablate", "Feature-combo / patch-size / view sweep");
  c_abl->add_option("--manifest", abl.manifest, "Corpus manifest");
  c_abl->add_option("-o,--out", abl.out, "Report directory");
  c_abl->add_option("--combos", abl.combos, "Feature combos (default: the seven descriptor rows)");
  c_abl->add_option("--patch-sides", abl.sides, "Patch sides")->capture_default_str();
  c_abl->add_option("--views", abl.views, "View modes")->capture_default_str();
  c_abl->add_option("--balance", abl.balance, "over | under (default: none)");
  c_abl->add_option("--k", abl.k, "Folds")->capture_default_str();
  c_abl->add_option("--grouping", abl.grouping, "per-patch | per-stone")->capture_default_str();
  c_abl->add_option("--lbp-window", abl.lbp_window)->capture_default_str();
  abl.learner.add_to(c_abl);

  EmbedOpts emb;
  auto* c_emb = app.add_subcommand("embed", "3-D principal-component export");
  c_emb->add_option("--features", emb.features, "Feature file");
  c_emb->add_option("-o,--out", emb.out, "Embedding file");
  c_emb->add_option("--dim", emb.dim, "Output dimensions")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what());
  }

  try {
    if (*c_synth) return cmd_synth(synth, common);
    if (*c_extract) return cmd_extract(extract, common);
    if (*c_balance) return cmd_balance(bal, common);
    if (*c_feat) return cmd_featurize(feat, common);
    if (*c_train) return cmd_train(train, common);
    if (*c_eval) return cmd_evaluate(eval, common);
    if (*c_abl) return cmd_ablate(abl, common);
    if (*c_emb) return cmd_embed(emb, common);
  } catch (const Error& e) {
    return report_error(e.code(), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return report_error("usage", "no subcommand");
}
