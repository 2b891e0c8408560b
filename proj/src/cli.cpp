#include "hierprobe/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "hierprobe/config.hpp"
#include "hierprobe/planted.hpp"
#include "hierprobe/random.hpp"
#include "hierprobe/reference_worker.hpp"
#include "hierprobe/sampling.hpp"
#include "hierprobe/svg.hpp"
#include "parallel.hpp"

namespace hierprobe {

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::WorkerUnavailable:
    case ErrorCode::WorkerError:
    case ErrorCode::ProtocolViolation:
    case ErrorCode::ScoreOutOfRange:
      return kExitWorker;
    case ErrorCode::Config:
    case ErrorCode::Io:
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnknownConcept:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::SpaceMismatch:
    case ErrorCode::LayerOutOfRange:
    case ErrorCode::TooFewSamples:
    case ErrorCode::InsufficientDimension:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ZeroVector:
      return kExitConfig;
    default:
      return kExitFailure;
  }
}

namespace {

namespace fs = std::filesystem;

// Shortest readable form that always shows a decimal point ("0.0", "0.3362").
std::string display(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string file_stem_for(const std::string& concept_id) {
  std::string s = concept_id;
  for (char& c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) c = '_';
  }
  return s;
}

struct Context {
  RunConfig cfg;
  std::size_t workers = 1;
  std::optional<PlantedGenerator> planted;
  std::shared_ptr<WorkerBackend> worker;
  std::optional<GeneratorHandle> handle;
  std::optional<ConceptCatalog> concepts;
  std::optional<StageMap> stage_map;
  std::shared_ptr<spdlog::logger> log;
  std::ostream* out = nullptr;

  const GeneratorHandle& gen() const { return *handle; }
};

void open_generator(Context& ctx) {
  const auto& g = ctx.cfg.generator;
  if (g.planted) {
    if (!fs::exists(*g.planted)) throw Error(ErrorCode::Config, "planted spec file " + g.planted->string() + " not found");
    ctx.planted = load_planted(read_json_file(*g.planted));
    ctx.handle = ctx.planted->handle;
    ctx.log->info("planted generator: {} concepts, {} layers x {}", ctx.planted->catalog.size(),
                  ctx.planted->spec->space.num_layers, ctx.planted->spec->space.per_layer_dim);
  } else {
    WorkerOptions opts;
    opts.command = g.worker;
    opts.timeout = g.timeout;
    opts.working_dir = g.worker_dir;
    opts.sessions = g.sessions ? g.sessions : ctx.workers;
    ctx.worker = start_worker(opts);
    ctx.handle = GeneratorHandle(ctx.worker);
    ctx.log->info("worker generator '{}': {} sessions", g.worker.front(), ctx.worker->session_count());
  }
  const auto& catalog = ctx.handle->catalog();
  ctx.concepts = ctx.cfg.concepts.empty() ? catalog : catalog.subset(ctx.cfg.concepts);
  const auto L = ctx.handle->space().num_layers;
  if (ctx.cfg.stage_map) {
    ctx.stage_map = stage_map_from_json(*ctx.cfg.stage_map, L);
  } else if (ctx.planted) {
    ctx.stage_map = ctx.planted->spec->stage_map;
  } else if (L == 14) {
    ctx.stage_map = StageMap::stylegan14();
  } else if (L == 12) {
    ctx.stage_map = StageMap::biggan12();
  } else {
    ctx.stage_map = StageMap::single(L);
  }
  std::error_code ec;
  fs::create_directories(ctx.cfg.output_dir, ec);
  if (ec || !fs::is_directory(ctx.cfg.output_dir)) {
    throw Error(ErrorCode::Config, "cannot create output directory " + ctx.cfg.output_dir.string());
  }
}

fs::path out_path(const Context& ctx, const std::string& name) { return ctx.cfg.output_dir / name; }

void write_ground_truth(const Context& ctx) {
  if (!ctx.planted) return;
  CsvTable t;
  t.header = {"concept_id", "stage", "frozen"};
  const auto truth = planted_ground_truth(*ctx.planted->spec);
  for (const auto& c : ctx.concepts->concepts()) {
    const auto& entry = truth.at(c.id);
    t.rows.push_back({c.id, entry.stage.value_or("none"), entry.frozen ? "1" : "0"});
  }
  write_text_file(out_path(ctx, "ground_truth.csv"), to_csv(t));
}

std::vector<BoundaryRecord> load_boundaries(const Context& ctx) {
  const auto& dir = ctx.cfg.boundary_dir;
  if (!fs::is_directory(dir)) {
    throw Error(ErrorCode::Config, "boundary directory " + dir.string() + " does not exist; run probe first");
  }
  std::map<std::string, BoundaryRecord> by_id;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto record = boundary_from_json(read_json_file(f));
    if (!ctx.gen().catalog().find(record.boundary.concept_id)) {
      throw Error(ErrorCode::UnknownConcept, "boundary " + f.string() + " is for unknown concept '" +
                                                 record.boundary.concept_id + "'");
    }
    by_id.insert_or_assign(record.boundary.concept_id, std::move(record));
  }
  std::vector<BoundaryRecord> out;
  for (const auto& c : ctx.concepts->concepts()) {
    const auto it = by_id.find(c.id);
    if (it != by_id.end()) out.push_back(it->second);
  }
  if (out.empty()) throw Error(ErrorCode::Config, "no boundary files for the selected concepts in " + dir.string());
  return out;
}

BoundaryRecord load_boundary(const Context& ctx, const std::string& concept_id) {
  if (concept_id.empty()) throw Error(ErrorCode::Config, "no concept given for this command");
  if (!ctx.gen().catalog().find(concept_id)) throw Error(ErrorCode::UnknownConcept, concept_id);
  const auto path = ctx.cfg.boundary_dir / (file_stem_for(concept_id) + ".json");
  if (!fs::exists(path)) throw Error(ErrorCode::Config, "no boundary for '" + concept_id + "' at " + path.string());
  return boundary_from_json(read_json_file(path));
}

// --- probe -----------------------------------------------------------------

std::vector<TrainingReport> run_probe(Context& ctx) {
  const auto reports = probe_concepts(ctx.gen(), *ctx.concepts, ctx.cfg.probe, ctx.workers);
  fs::create_directories(ctx.cfg.boundary_dir);
  for (const auto& r : reports) {
    write_json_file(ctx.cfg.boundary_dir / (file_stem_for(r.concept_id) + ".json"),
                    boundary_to_json({r.boundary, r.train_accuracy, r.holdout_accuracy}));
  }
  write_text_file(out_path(ctx, "probe_summary.csv"), to_csv(training_summary_table(reports, *ctx.concepts)));
  write_ground_truth(ctx);
  *ctx.out << "probe: " << reports.size() << " boundaries in " << ctx.cfg.boundary_dir.string() << "\n";
  for (const auto& r : reports) {
    *ctx.out << "  " << r.concept_id << "  train " << display(r.train_accuracy) << "  holdout "
             << display(r.holdout_accuracy) << "\n";
  }
  return reports;
}

// --- verify ----------------------------------------------------------------

std::vector<RescoreResult> run_verify(Context& ctx) {
  const auto boundaries = load_boundaries(ctx);
  std::vector<RescoreResult> results(boundaries.size());
  detail::parallel_for(boundaries.size(), ctx.workers, [&](std::size_t i) {
    results[i] = rescore(ctx.gen(), boundaries[i].boundary, boundaries[i].boundary.concept_id, ctx.cfg.rescore);
  });
  const auto ranking = rank_concepts(results);
  std::vector<RescoreResult> ranked;
  for (const auto& id : ranking) {
    for (const auto& r : results) {
      if (r.concept_id == id) ranked.push_back(r);
    }
  }
  write_text_file(out_path(ctx, "rescore.csv"), to_csv(rescore_table(ranked, *ctx.concepts)));
  std::string ranking_text;
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& r : ranked) {
    ranking_text += r.concept_id + "\n";
    bars.emplace_back(r.concept_id, r.delta_s);
  }
  write_text_file(out_path(ctx, "ranking.txt"), ranking_text);
  write_text_file(out_path(ctx, "rescore.svg"), svg_bar_chart(bars, "Re-scoring", "delta s"));
  *ctx.out << "verify: concepts ranked by delta s\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    *ctx.out << "  " << (i + 1) << ". " << ranked[i].concept_id << "  " << display(ranked[i].delta_s) << "\n";
  }
  return ranked;
}

// --- localize --------------------------------------------------------------

std::vector<RescoreResult> run_localize(Context& ctx) {
  const auto boundaries = load_boundaries(ctx);
  std::vector<RescoreResult> results(boundaries.size());
  detail::parallel_for(boundaries.size(), ctx.workers, [&](std::size_t i) {
    results[i] = localize_stages(ctx.gen(), boundaries[i].boundary, boundaries[i].boundary.concept_id,
                                 ctx.cfg.rescore, *ctx.stage_map);
  });
  CsvTable t = rescore_table(results, *ctx.concepts);
  t.header.push_back("argmax_stage");
  for (std::size_t i = 0; i < results.size(); ++i) t.rows[i].push_back(argmax_stage(results[i]).value_or("none"));
  write_text_file(out_path(ctx, "localize.csv"), to_csv(t));
  write_text_file(out_path(ctx, "localize.svg"), svg_stage_shares(results, "Normalized per-stage re-scoring"));
  write_ground_truth(ctx);
  *ctx.out << "localize: stage with the largest delta s\n";
  for (const auto& r : results) {
    const auto stage = argmax_stage(r);
    double share = 0.0;
    for (const auto& [name, v] : *r.normalized_per_stage) {
      if (stage && name == *stage) share = v;
    }
    *ctx.out << "  " << r.concept_id << "  " << stage.value_or("none") << "  " << display(share) << "\n";
  }
  return results;
}

// --- disentangle -----------------------------------------------------------

struct Disentanglement {
  std::vector<std::string> ids;
  Matrix matrix;
};

Disentanglement run_disentangle(Context& ctx) {
  const auto records = load_boundaries(ctx);
  Disentanglement d;
  std::vector<Boundary> boundaries;
  for (const auto& r : records) {
    d.ids.push_back(r.boundary.concept_id);
    boundaries.push_back(r.boundary);
  }
  d.matrix = disentanglement_matrix(ctx.gen(), boundaries, d.ids, ctx.cfg.rescore);
  CsvTable t;
  t.header.push_back("boundary\\concept");
  for (const auto& id : d.ids) t.header.push_back(id);
  for (std::size_t i = 0; i < d.ids.size(); ++i) {
    std::vector<std::string> row{d.ids[i]};
    for (std::size_t j = 0; j < d.ids.size(); ++j) {
      row.push_back(format_double(d.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
    t.rows.push_back(std::move(row));
  }
  write_text_file(out_path(ctx, "disentangle.csv"), to_csv(t));
  write_json_file(out_path(ctx, "disentangle.json"),
                  {{"version", kSchemaVersion}, {"concepts", d.ids}, {"matrix", to_json(d.matrix)}});
  write_text_file(out_path(ctx, "disentangle.svg"), svg_matrix(d.matrix, d.ids, "Cross-concept re-scoring"));
  double worst = 0.0;
  for (Eigen::Index i = 0; i < d.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.matrix.cols(); ++j) {
      if (i != j && d.matrix(i, i) > 0.0) worst = std::max(worst, d.matrix(i, j) / d.matrix(i, i));
    }
  }
  *ctx.out << "disentangle: " << d.ids.size() << "x" << d.ids.size()
           << " matrix, largest off-diagonal / diagonal = " << display(worst) << "\n";
  return d;
}

// --- manipulate ------------------------------------------------------------

ImageBuffer compose_grid(const std::vector<ImageBuffer>& images, std::size_t rows, std::size_t cols) {
  const std::size_t gap = 2;
  const auto w = images.front().width(), h = images.front().height();
  ImageBuffer grid(cols * w + (cols + 1) * gap, rows * h + (rows + 1) * gap, Rgb{255, 255, 255});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& img = images[r * cols + c];
      const auto x0 = gap + c * (w + gap), y0 = gap + r * (h + gap);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) grid.at(x0 + x, y0 + y) = img.at(x, y);
      }
    }
  }
  return grid;
}

// Applies a latent-space edit and re-projects it into the layer-wise code.
LayerwiseCode reproject(const Context& ctx, const LatentCode& moved, const LayerwiseCode& base,
                        std::span<const std::size_t> layers) {
  const auto projected = project_to_layerwise({moved.values, SpaceTag::W}, ctx.gen().transform());
  LayerwiseCode out = base;
  const auto d = static_cast<Eigen::Index>(base.per_layer_dim());
  for (const auto l : layers) {
    if (l >= base.num_layers()) throw Error(ErrorCode::LayerOutOfRange, "layer " + std::to_string(l));
    out.flat().segment(static_cast<Eigen::Index>(l) * d, d) = projected.layer(l);
  }
  return out;
}

void run_manipulate(Context& ctx) {
  const auto& mc = ctx.cfg.manipulate;
  const auto first = load_boundary(ctx, mc.concept_id);
  const auto layers = mc.layers ? *mc.layers : all_layers(ctx.gen().space().num_layers);
  const auto dir = ctx.cfg.output_dir / "manipulate" / mc.mode;
  fs::create_directories(dir);
  const std::size_t bases = mc.mode == "jitter" ? 1 : mc.count;
  const auto sample = sample_codes(ctx.gen(), bases, mc.seed);
  const bool latent_space = first.boundary.space != SpaceTag::LayerwiseFlat;

  struct Output {
    std::string name;
    LayerwiseCode code;
    Json meta;
  };
  std::vector<Output> outputs;
  for (std::size_t i = 0; i < bases; ++i) {
    outputs.push_back({"sample" + std::to_string(i) + "_base", sample.codes[i], {{"sample", i}, {"base", true}}});
  }
  Json manifest = {{"version", kSchemaVersion}, {"mode", mc.mode}, {"concept", mc.concept_id}};

  if (mc.mode == "independent") {
    for (std::size_t i = 0; i < bases; ++i) {
      for (std::size_t k = 0; k < mc.steps.size(); ++k) {
        const double step = mc.steps[k];
        LayerwiseCode code = latent_space
                                 ? reproject(ctx, manipulate_independent(sample.latents[i], first.boundary, step),
                                             sample.codes[i], layers)
                                 : manipulate_independent(sample.codes[i], first.boundary, step, layers);
        outputs.push_back({"sample" + std::to_string(i) + "_step" + std::to_string(k), std::move(code),
                           {{"sample", i}, {"step", step}}});
      }
    }
  } else if (mc.mode == "joint") {
    const auto second = load_boundary(ctx, mc.second_concept_id);
    if (second.boundary.space != first.boundary.space) {
      throw Error(ErrorCode::SpaceMismatch, "joint edits need boundaries in the same space");
    }
    manifest["second_concept"] = mc.second_concept_id;
    manifest["rows"] = mc.steps.size();
    manifest["cols"] = mc.second_steps.size();
    for (std::size_t i = 0; i < bases; ++i) {
      for (std::size_t r = 0; r < mc.steps.size(); ++r) {
        for (std::size_t c = 0; c < mc.second_steps.size(); ++c) {
          const std::vector<Edit> edits{{first.boundary, mc.steps[r], layers},
                                        {second.boundary, mc.second_steps[c], layers}};
          LayerwiseCode code = latent_space ? reproject(ctx, manipulate_joint(sample.latents[i], edits),
                                                        sample.codes[i], layers)
                                            : manipulate_joint(sample.codes[i], edits);
          outputs.push_back({"sample" + std::to_string(i) + "_r" + std::to_string(r) + "_c" + std::to_string(c),
                             std::move(code),
                             {{"sample", i}, {"row", r}, {"col", c}, {"steps", {mc.steps[r], mc.second_steps[c]}}}});
        }
      }
    }
  } else {
    for (std::size_t j = 0; j < mc.count; ++j) {
      const auto seed = derive_seed(mc.seed, j + 1);
      LayerwiseCode code =
          latent_space
              ? reproject(ctx, manipulate_jitter(sample.latents[0], first.boundary, mc.step, mc.jitter_scale, seed),
                          sample.codes[0], layers)
              : manipulate_jitter(sample.codes[0], first.boundary, mc.step, layers, mc.jitter_scale, seed);
      outputs.push_back({"jitter" + std::to_string(j), std::move(code),
                         {{"sample", 0}, {"step", mc.step}, {"jitter_scale", mc.jitter_scale}, {"seed", seed}}});
    }
  }

  std::vector<LayerwiseCode> codes;
  for (const auto& o : outputs) codes.push_back(o.code);
  const auto images = generate_batch(ctx.gen(), codes);
  Json entries = Json::array();
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    write_json_file(dir / (outputs[k].name + ".json"), code_to_json(outputs[k].code));
    write_png(dir / (outputs[k].name + ".png"), images[k]);
    Json e = outputs[k].meta;
    e["name"] = outputs[k].name;
    entries.push_back(std::move(e));
  }
  if (mc.mode == "joint") {
    const std::size_t cell = mc.steps.size() * mc.second_steps.size();
    for (std::size_t i = 0; i < bases; ++i) {
      const auto begin = images.begin() + static_cast<std::ptrdiff_t>(bases + i * cell);
      const std::vector<ImageBuffer> block(begin, begin + static_cast<std::ptrdiff_t>(cell));
      write_png(dir / ("sample" + std::to_string(i) + "_grid.png"),
                compose_grid(block, mc.steps.size(), mc.second_steps.size()));
    }
  }
  manifest["outputs"] = std::move(entries);
  write_json_file(dir / "manifest.json", manifest);
  *ctx.out << "manipulate: " << outputs.size() - bases << " " << mc.mode << " outputs in " << dir.string() << "\n";
}

// --- transition ------------------------------------------------------------

void merge_into(TransitionMatrix& total, const TransitionMatrix& m) {
  for (const auto& [pair, n] : m.counts) total.counts[pair] += n;
  for (const auto& [label, name] : m.label_names) total.label_names.emplace(label, name);
}

void run_transition(Context& ctx) {
  const auto& tc = ctx.cfg.transition;
  TransitionMatrix total;
  if (tc.before_mask) {
    total = transition_matrix(read_mask_png(*tc.before_mask), read_mask_png(*tc.after_mask));
  } else {
    const auto b = load_boundary(ctx, tc.concept_id);
    if (tc.count < 1) throw Error(ErrorCode::Config, "transition.count must be positive");
    const auto layers = tc.layers ? *tc.layers : all_layers(ctx.gen().space().num_layers);
    const auto sample = sample_codes(ctx.gen(), tc.count, tc.seed);
    std::vector<LayerwiseCode> after;
    for (std::size_t k = 0; k < tc.count; ++k) {
      after.push_back(shift_sample(ctx.gen(), sample.latents[k], sample.codes[k], b.boundary, tc.step, layers));
    }
    std::vector<SegmentationMask> before_masks, after_masks;
    if (ctx.worker) {
      const auto dir = ctx.cfg.output_dir / "transition";
      const auto before_images = ctx.worker->generate_files(sample.codes, dir / "before");
      const auto after_images = ctx.worker->generate_files(after, dir / "after");
      before_masks = ctx.worker->segment(before_images);
      after_masks = ctx.worker->segment(after_images);
    } else {
      for (const auto& img : generate_batch(ctx.gen(), sample.codes)) before_masks.push_back(segment_planted(img));
      for (const auto& img : generate_batch(ctx.gen(), after)) after_masks.push_back(segment_planted(img));
    }
    for (std::size_t k = 0; k < tc.count; ++k) merge_into(total, transition_matrix(before_masks[k], after_masks[k]));
  }
  write_json_file(out_path(ctx, "transition.json"), transition_to_json(total));
  write_text_file(out_path(ctx, "transition.csv"), to_csv(transition_table(total)));
  *ctx.out << "transition: " << total.total() << " pixels, " << total.off_diagonal() << " changed label\n";
}

// --- report ----------------------------------------------------------------

void run_report(Context& ctx) {
  const auto reports = run_probe(ctx);
  const auto ranked = run_verify(ctx);
  const auto stages = run_localize(ctx);
  const auto dis = run_disentangle(ctx);

  std::map<std::string, std::size_t> rank_of;
  std::map<std::string, double> delta_of;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    rank_of[ranked[i].concept_id] = i + 1;
    delta_of[ranked[i].concept_id] = ranked[i].delta_s;
  }
  std::map<std::string, std::string> stage_of;
  for (const auto& r : stages) stage_of[r.concept_id] = argmax_stage(r).value_or("none");
  std::map<std::string, PlantedTruth> truth;
  if (ctx.planted) truth = planted_ground_truth(*ctx.planted->spec);

  const auto& c = ctx.cfg;
  std::ostringstream md;
  md << "# Probe report\n\n";
  md << "Generator: " << (ctx.planted ? "planted" : "worker") << ", " << ctx.gen().space().num_layers
     << " layers x " << ctx.gen().space().per_layer_dim << ".\n\n";
  md << "| setting | value |\n|---|---|\n";
  md << "| samples N | " << c.probe.num_samples << " |\n";
  md << "| extremes m | " << c.probe.extreme_count << " |\n";
  md << "| re-scoring samples K | " << c.rescore.num_samples << " |\n";
  md << "| step | " << display(c.rescore.step) << " |\n";
  md << "| SVM C / epochs | " << display(c.probe.svm.regularization) << " / " << c.probe.svm.epochs << " |\n";
  md << "| seeds (probe, svm, rescore) | " << c.probe.seed << ", " << c.probe.svm.seed << ", " << c.rescore.seed
     << " |\n\n";
  md << "## Concepts\n\n";
  md << "| rank | concept | level | holdout accuracy | delta s | stage |" << (ctx.planted ? " planted stage |" : "")
     << "\n|---|---|---|---|---|---|" << (ctx.planted ? "---|" : "") << "\n";
  std::vector<const TrainingReport*> ordered;
  for (const auto& r : reports) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [&](const TrainingReport* a, const TrainingReport* b) {
    return rank_of[a->concept_id] < rank_of[b->concept_id];
  });
  for (const auto* r : ordered) {
    const auto& id = r->concept_id;
    md << "| " << rank_of[id] << " | " << id << " | " << to_string(ctx.concepts->at(id).level) << " | "
       << display(r->holdout_accuracy) << " | " << display(delta_of[id]) << " | " << stage_of[id] << " |";
    if (ctx.planted) md << " " << truth[id].stage.value_or("none") << " |";
    md << "\n";
  }
  double worst = 0.0;
  for (Eigen::Index i = 0; i < dis.matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < dis.matrix.cols(); ++j) {
      if (i != j && dis.matrix(i, i) > 0.0) worst = std::max(worst, dis.matrix(i, j) / dis.matrix(i, i));
    }
  }
  md << "\nLargest off-diagonal cross-effect relative to its row diagonal: " << display(worst) << ".\n\n";
  md << "## Files\n\n";
  for (const char* f : {"probe_summary.csv", "rescore.csv", "rescore.svg", "localize.csv", "localize.svg",
                        "disentangle.csv", "disentangle.svg"}) {
    md << "- [" << f << "](" << f << ")\n";
  }
  write_text_file(out_path(ctx, "report.md"), md.str());
  *ctx.out << "report: " << out_path(ctx, "report.md").string() << "\n";
}

spdlog::level::level_enum log_level_from_env(std::ostream& err) {
  const char* v = std::getenv("HIERPROBE_LOG");
  if (!v || !*v) return spdlog::level::warn;
  const std::string s = v;
  if (s == "error") return spdlog::level::err;
  if (s == "warn") return spdlog::level::warn;
  if (s == "info") return spdlog::level::info;
  if (s == "debug") return spdlog::level::debug;
  err << "HIERPROBE_LOG must be error, warn, info or debug; using warn\n";
  return spdlog::level::warn;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probe the layer-wise latent space of a generator for semantic concepts."};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  app.add_option("--out", out_dir, "Output directory (overrides the config)");
  app.add_option("--seed", seed, "Top-level seed (overrides every seed in the config)");
  app.add_option("--workers", workers, "Threads (and default worker sessions)")->check(CLI::PositiveNumber);

  const std::vector<std::pair<const char*, const char*>> verbs = {
      {"probe", "Sample, label extremes and train one boundary per concept"},
      {"verify", "Re-score every boundary and rank the concepts"},
      {"localize", "Re-score per layer stage"},
      {"manipulate", "Write manipulated codes and images"},
      {"disentangle", "Cross-concept re-scoring matrix"},
      {"transition", "Per-pixel label transition counts"},
      {"report", "probe, verify, localize and disentangle, plus report.md"},
  };
  for (const auto& [name, help] : verbs) app.add_subcommand(name, help);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto log = std::make_shared<spdlog::logger>("hierprobe", sink);
  log->set_pattern("hierprobe: [%l] %v");
  log->set_level(log_level_from_env(err));

  try {
    Context ctx;
    ctx.cfg = load_run_config(config_path, seed);
    if (!out_dir.empty()) {
      const bool default_boundaries = ctx.cfg.boundary_dir == ctx.cfg.output_dir / "boundaries";
      ctx.cfg.output_dir = out_dir;
      if (default_boundaries) ctx.cfg.boundary_dir = ctx.cfg.output_dir / "boundaries";
    }
    ctx.workers = workers;
    ctx.log = log;
    ctx.out = &out;
    open_generator(ctx);
    log->info("{}: output in {}", verb, ctx.cfg.output_dir.string());
    if (verb == "probe") run_probe(ctx);
    else if (verb == "verify") run_verify(ctx);
    else if (verb == "localize") run_localize(ctx);
    else if (verb == "manipulate") run_manipulate(ctx);
    else if (verb == "disentangle") run_disentangle(ctx);
    else if (verb == "transition") run_transition(ctx);
    else run_report(ctx);
  } catch (const Error& e) {
    log->error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    log->error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    log->error("{}", e.what());
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace hierprobe
