// tinyann command-line tool: synthesize recordings, train, evaluate,
// compress and estimate tiny gesture classifiers.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "tinyann/compression.hpp"
#include "tinyann/error.hpp"
#include "tinyann/estimator.hpp"
#include "tinyann/io.hpp"
#include "tinyann/pipeline.hpp"
#include "tinyann/synth.hpp"
#include "tinyann/training.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace tinyann;

constexpr const char* kArchHelp =
    "Architecture strings: <features>-<layer>-<layer>... where each layer is\n"
    "[r]<neurons><activation>; 'r' marks a recurrent layer. Activations:\n"
    "sigmoid, tanh, hardsigmoid, softsign, relu, softmax, approxsoftmax, max.\n"
    "Example: 180-8relu-5softmax, 12-9relu-9relu-r17softmax";

struct Global {
  std::uint64_t seed = 0;
  bool json = false;
};

struct Output {
  Output(const Global& g, const CLI::App& a) : global(g), app(a) {}

  const Global& global;
  const CLI::App& app;
  json report = json::object();
  std::ostringstream text;

  void print() const {
    const std::string config = "seed=" + std::to_string(global.seed) + "\n[" + app.get_name() + "]\n" +
                               app.config_to_str(true, false);
    if (global.json) {
      json out = json::object();
      out["config"] = config;
      for (const auto& [k, v] : report.items()) out[k] = v;
      std::cout << out.dump(2) << "\n";
      return;
    }
    std::cout << "# effective configuration\n";
    std::istringstream lines(config);
    for (std::string line; std::getline(lines, line);) {
      if (!line.empty()) std::cout << "#   " << line << "\n";
    }
    std::cout << text.str();
  }
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct LoadedModel {
  ModelSpec spec;
  Parameters params;
  Metadata metadata;
  bool compressed = false;
};

LoadedModel load_any_model(const std::string& path) {
  const auto bytes = read_file(path);
  const std::string_view head(reinterpret_cast<const char*>(bytes.data()), std::min<std::size_t>(bytes.size(), 64));
  if (head.starts_with("format tinyann-compressed")) {
    auto file = parse_compressed(bytes);
    return {file.model.spec, decompress(file.model), file.metadata, true};
  }
  auto file = parse_model(bytes);
  return {file.spec, file.params, file.metadata, false};
}

json confusion_json(const AccuracyReport& r) {
  json rows = json::array();
  for (const auto& row : r.confusion) rows.push_back(row);
  return rows;
}

void print_confusion(std::ostream& out, const AccuracyReport& r) {
  out << "confusion (rows: annotated, columns: recognized)\n";
  out << "            L2R   R2L   T2B   B2T  none\n";
  constexpr const char* kNames[] = {"L2R ", "R2L ", "T2B ", "B2T ", "none"};
  for (std::size_t i = 0; i < kGestureClasses; ++i) {
    out << "  " << kNames[i] << "   ";
    for (auto v : r.confusion[i]) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%6zu", v);
      out << buf;
    }
    out << "\n";
  }
}

std::vector<GestureEvent> recognize(const ModelSpec& spec, const Parameters& params,
                                    std::span<const Image> stream, const std::string& mode,
                                    const DetectorConfig& detector, const ExecOptions& opts) {
  if (mode == "ffnn-candidates") return recognize_candidates(spec, params, stream, detector, opts);
  if (mode == "rnn-phases") {
    if (spec.outputs() != phase::kStates) {
      throw Error(ErrorCode::InvalidArgument, "rnn-phases mode needs a model with 17 outputs");
    }
    return recognize_phases(spec, params, stream, opts);
  }
  if (mode == "rnn-gestures") return recognize_rnn_gestures(spec, params, stream, opts);
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + mode + "'");
}

std::string auto_mode(const ModelSpec& spec) {
  if (!spec.has_recurrent()) return "ffnn-candidates";
  return spec.outputs() == phase::kStates ? "rnn-phases" : "rnn-gestures";
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::string out;
  std::string annotations;
  CorpusConfig corpus;
  double fps = 40.0;
};

void run_synth(const Global& g, const CLI::App& app, SynthOptions o) {
  o.corpus.seed = g.seed;
  Dataset d;
  d.sequence = synthesize_corpus(o.corpus);
  d.fps = o.fps;
  save_dataset(o.out, d);
  if (!o.annotations.empty()) {
    std::string lines;
    for (const auto& a : d.sequence.annotations) {
      lines += std::to_string(a.frame) + " " + std::string(to_string(a.label)) + "\n";
    }
    write_file_atomic(o.annotations, std::span(reinterpret_cast<const std::uint8_t*>(lines.data()), lines.size()));
  }

  std::array<std::size_t, kGestureClasses> counts{};
  for (const auto& a : d.sequence.annotations) ++counts[index_of(a.label)];
  Output out(g, app);
  out.report["frames"] = d.sequence.size();
  out.report["annotations"] = d.sequence.annotations.size();
  json per_class = json::object();
  for (std::size_t c = 0; c < kGestureClasses; ++c) {
    per_class[std::string(to_string(static_cast<GestureClass>(c)))] = counts[c];
  }
  out.report["per_class"] = per_class;
  out.text << "wrote " << o.out << ": " << d.sequence.size() << " frames, "
           << d.sequence.annotations.size() << " annotated instances\n";
  for (std::size_t c = 0; c < kGestureClasses; ++c) {
    out.text << "  " << to_string(static_cast<GestureClass>(c)) << ": " << counts[c] << "\n";
  }
  out.print();
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string data;
  std::string validation;
  std::string arch = "180-8relu-5softmax";
  std::string out;
  std::string mode = "ffnn";
  std::string optimizer = "adam";
  std::size_t epochs = 60;
  double learning_rate = 0.01;
  std::size_t batch = 32;
  double holdout = 0.2;
  std::size_t clutter = 300;
  std::size_t horizon = 32;
  std::size_t segment = 200;
  std::size_t tolerance = 10;
  double alpha = 0.99;
};

TrainingConfig training_config(const Global& g, const TrainOptions& o) {
  TrainingConfig cfg;
  if (o.optimizer == "adam") cfg.optimizer = Optimizer::Adam;
  else if (o.optimizer == "sgd") cfg.optimizer = Optimizer::Sgd;
  else throw Error(ErrorCode::InvalidArgument, "unknown optimizer '" + o.optimizer + "'");
  cfg.learning_rate = o.learning_rate;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.horizon = o.horizon;
  cfg.seed = derive_seed(g.seed, 11);
  return cfg;
}

void run_train(const Global& g, const CLI::App& app, const TrainOptions& o) {
  const ModelSpec spec = parse_architecture(o.arch);
  const Dataset data = load_dataset(o.data);
  const auto& seq = data.sequence;
  const std::size_t pixels = seq.width * seq.height;
  if (!(o.holdout >= 0.0 && o.holdout < 1.0)) throw Error(ErrorCode::InvalidArgument, "holdout must lie in [0, 1)");
  const TrainingConfig cfg = training_config(g, o);
  validate(cfg);
  Parameters params = init_params(spec, derive_seed(g.seed, 10));

  Output out(g, app);
  Metadata meta{{"arch", format_architecture(spec)}, {"mode", o.mode}, {"seed", std::to_string(g.seed)},
                {"epochs", std::to_string(o.epochs)}};
  double final_loss = 0.0;

  if (o.mode == "ffnn") {
    if (spec.has_recurrent()) throw Error(ErrorCode::RecurrentLayerPresent, "ffnn mode needs an all-dense architecture");
    if (spec.features != kScaledFrames * pixels) {
      throw Error(ErrorCode::ShapeMismatch, "architecture expects " + std::to_string(spec.features) +
                                                " features but candidates have " +
                                                std::to_string(kScaledFrames * pixels));
    }
    if (spec.outputs() != kGestureClasses) throw Error(ErrorCode::ShapeMismatch, "ffnn mode needs 5 outputs");
    auto samples = candidate_samples(seq.images, seq.annotations, {}, o.tolerance);
    std::mt19937_64 rng(derive_seed(g.seed, 12));
    std::shuffle(samples.begin(), samples.end(), rng);
    const auto held = static_cast<std::size_t>(o.holdout * static_cast<double>(samples.size()));
    std::vector<Sample> val(samples.end() - static_cast<std::ptrdiff_t>(held), samples.end());
    samples.resize(samples.size() - held);
    std::vector<Sample> train = samples;
    const auto clutter = clutter_samples(o.clutter, seq.width, seq.height, derive_seed(g.seed, 13));
    train.insert(train.end(), clutter.begin(), clutter.end());

    if (o.epochs > 0) {
      auto result = train_ffnn(spec, params, train, cfg);
      params = std::move(result.params);
      final_loss = result.loss_history.back();
    }
    const double train_acc = accuracy(spec, params, samples);
    const double val_acc = val.empty() ? 0.0 : accuracy(spec, params, val);
    out.report["train_candidates"] = samples.size();
    out.report["validation_candidates"] = val.size();
    out.report["train_accuracy"] = train_acc;
    out.report["validation_accuracy"] = val_acc;
    out.text << "candidates: " << samples.size() << " train, " << val.size() << " validation, "
             << clutter.size() << " clutter\n";
    out.text << "train accuracy " << fixed(100 * train_acc, 2) << "%, validation accuracy "
             << fixed(100 * val_acc, 2) << "%\n";
    meta["train_accuracy"] = fixed(train_acc, 4);
    meta["validation_accuracy"] = fixed(val_acc, 4);
  } else if (o.mode == "rnn-phases") {
    if (!spec.has_recurrent()) throw Error(ErrorCode::InvalidArgument, "rnn-phases mode needs a recurrent layer");
    if (spec.features != pixels && spec.features != pixels + 3) {
      throw Error(ErrorCode::ShapeMismatch, "phase RNNs take " + std::to_string(pixels) + " or " +
                                                std::to_string(pixels + 3) + " features");
    }
    if (spec.outputs() != phase::kStates) throw Error(ErrorCode::ShapeMismatch, "rnn-phases mode needs 17 outputs");
    const Sequence whole = phase_sequence(seq, spec.features == pixels + 3, o.alpha);
    std::vector<Sequence> segments;
    const std::size_t len = std::max<std::size_t>(1, o.segment);
    for (std::size_t begin = 0; begin < whole.frames.size(); begin += len) {
      const std::size_t end = std::min(whole.frames.size(), begin + len);
      Sequence s;
      s.frames.assign(whole.frames.begin() + static_cast<std::ptrdiff_t>(begin),
                      whole.frames.begin() + static_cast<std::ptrdiff_t>(end));
      s.targets.assign(whole.targets.begin() + static_cast<std::ptrdiff_t>(begin),
                       whole.targets.begin() + static_cast<std::ptrdiff_t>(end));
      segments.push_back(std::move(s));
    }
    const auto held = static_cast<std::size_t>(o.holdout * static_cast<double>(segments.size()));
    std::vector<Sequence> val(segments.end() - static_cast<std::ptrdiff_t>(held), segments.end());
    segments.resize(segments.size() - held);
    if (o.epochs > 0) {
      auto result = train_rnn_bptt(spec, params, segments, cfg);
      params = std::move(result.params);
      final_loss = result.loss_history.back();
    }
    auto frame_accuracy = [&](const std::vector<Sequence>& set) {
      std::size_t correct = 0, total = 0;
      for (const auto& s : set) {
        RnnState state = RnnState::for_spec(spec);
        for (std::size_t t = 0; t < s.frames.size(); ++t) {
          const auto y = step_rnn(spec, params, s.frames[t], state);
          correct += static_cast<int>(argmax(y)) == s.targets[t];
          ++total;
        }
      }
      return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    };
    const double train_acc = frame_accuracy(segments);
    const double val_acc = frame_accuracy(val);
    out.report["train_segments"] = segments.size();
    out.report["validation_segments"] = val.size();
    out.report["train_frame_accuracy"] = train_acc;
    out.report["validation_frame_accuracy"] = val_acc;
    out.text << "segments: " << segments.size() << " train, " << val.size() << " validation\n";
    out.text << "per-frame phase accuracy: train " << fixed(100 * train_acc, 2) << "%, validation "
             << fixed(100 * val_acc, 2) << "%\n";
    meta["train_accuracy"] = fixed(train_acc, 4);
    meta["validation_accuracy"] = fixed(val_acc, 4);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown training mode '" + o.mode + "'");
  }

  out.report["final_loss"] = final_loss;
  out.text << "final loss " << fixed(final_loss, 6) << "\n";

  if (!o.validation.empty()) {
    const Dataset vd = load_dataset(o.validation);
    const auto events = recognize(spec, params, vd.sequence.images, auto_mode(spec), {}, {});
    const auto report = evaluate_accuracy(events, vd.sequence.annotations, o.tolerance);
    out.report["heldout_accuracy"] = report.accuracy();
    out.report["heldout_confusion"] = confusion_json(report);
    out.text << "held-out recording: " << report.correct << "/" << report.total << " = "
             << fixed(100 * report.accuracy(), 2) << "% within +-" << o.tolerance << " frames\n";
    print_confusion(out.text, report);
    meta["heldout_accuracy"] = fixed(report.accuracy(), 4);
  }

  save_model(o.out, spec, params, meta);
  out.report["model"] = o.out;
  out.text << "wrote " << o.out << " (" << format_architecture(spec) << ", "
           << count_parameters(spec) << " parameters)\n";
  out.print();
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string model;
  std::string data;
  std::string events;
  std::string mode = "auto";
  std::size_t tolerance = 10;
};

std::vector<GestureEvent> read_events(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<GestureEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::size_t frame = 0;
    std::string label;
    if (!(fields >> frame)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line_no) + ": expected '<frame> <gesture>'");
    }
    if (!(fields >> label)) throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line_no) + ": missing gesture");
    const auto g = gesture_from_string(label);
    if (!g) throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line_no) + ": unknown gesture " + label);
    events.push_back({frame, *g});
  }
  return events;
}

void run_eval(const Global& g, const CLI::App& app, const EvalOptions& o) {
  const Dataset data = load_dataset(o.data);
  std::vector<GestureEvent> events;
  if (!o.events.empty()) {
    events = read_events(o.events);
  } else {
    if (o.model.empty()) throw Error(ErrorCode::InvalidArgument, "eval needs --model or --events");
    const auto m = load_any_model(o.model);
    const std::string mode = o.mode == "auto" ? auto_mode(m.spec) : o.mode;
    events = recognize(m.spec, m.params, data.sequence.images, mode, {}, {});
  }
  const auto report = evaluate_accuracy(events, data.sequence.annotations, o.tolerance);
  Output out(g, app);
  out.report["events"] = events.size();
  out.report["correct"] = report.correct;
  out.report["total"] = report.total;
  out.report["accuracy"] = report.accuracy();
  out.report["confusion"] = confusion_json(report);
  out.text << "accuracy " << report.correct << "/" << report.total << " = " << fixed(100 * report.accuracy(), 2)
           << "% within +-" << o.tolerance << " frames (" << events.size() << " events)\n";
  print_confusion(out.text, report);
  out.print();
}

// ---------------------------------------------------------------------------
// compress

struct CompressOptions {
  std::string model;
  std::string out;
  std::string retrain_data;
  double density = 0.32;
  std::size_t k = 15;
  bool huffman = false;
  std::size_t retrain_epochs = 20;
  double learning_rate = 0.002;
};

void run_compress(const Global& g, const CLI::App& app, const CompressOptions& o) {
  const auto m = load_any_model(o.model);
  if (m.spec.has_recurrent()) throw Error(ErrorCode::RecurrentLayerPresent, "compression supports all-dense models");
  CompressionOptions opts;
  opts.density = o.density;
  opts.k = o.k;
  opts.huffman = o.huffman;
  opts.seed = derive_seed(g.seed, 20);

  std::vector<Sample> samples;
  if (!o.retrain_data.empty()) {
    const Dataset d = load_dataset(o.retrain_data);
    samples = candidate_samples(d.sequence.images, d.sequence.annotations);
  }
  TrainingConfig cfg;
  cfg.epochs = o.retrain_epochs;
  cfg.learning_rate = o.learning_rate;
  cfg.seed = derive_seed(g.seed, 21);

  const PruneMask mask = prune(m.params, PrunePolicy::density(o.density));
  Parameters pruned = m.params;
  apply_mask(pruned, mask);
  if (!samples.empty() && cfg.epochs > 0) pruned = retrain_pruned(m.spec, pruned, mask, samples, cfg).params;
  QuantizedModel q = quantize_model(m.spec, pruned, mask, opts);
  if (!samples.empty() && cfg.epochs > 0) q = retrain_quantized(q, samples, cfg).model;
  const CompressedModel c = encode_model(q, o.huffman);
  save_compressed(o.out, c, {{"source", o.model}, {"seed", std::to_string(g.seed)}});

  const auto sizes = c.sizes();
  const std::size_t file_payload = compressed_payload_size(c);
  const auto dense_time = estimate_exec_time(m.spec);
  const auto sparse_time = estimate_compressed_exec_time(m.spec, sizes.surviving);

  Output out(g, app);
  out.report["weights"] = sizes.weights;
  out.report["surviving_weights"] = sizes.surviving;
  out.report["naive_bytes"] = sizes.naive_bytes;
  out.report["pruned_bytes"] = sizes.pruned_bytes;
  out.report["quantized_bytes"] = sizes.quantized_bytes;
  out.report["huffman_bytes"] = sizes.huffman_bytes;
  out.report["payload_bytes"] = sizes.payload_bytes;
  out.report["file_payload_bytes"] = file_payload;
  out.report["ratio"] = static_cast<double>(sizes.naive_bytes) / static_cast<double>(file_payload);
  out.report["exec_ms_dense"] = dense_time.total_us() / 1000.0;
  out.report["exec_ms_compressed"] = sparse_time.total_us() / 1000.0;
  out.text << "weights " << sizes.surviving << "/" << sizes.weights << " kept (density "
           << fixed(static_cast<double>(sizes.surviving) / static_cast<double>(sizes.weights), 3) << ")\n";
  out.text << "sizes: naive " << sizes.naive_bytes << " B, pruned " << sizes.pruned_bytes << " B, quantized "
           << sizes.quantized_bytes << " B";
  if (o.huffman) out.text << ", huffman " << sizes.huffman_bytes << " B";
  out.text << "\nstored payload " << file_payload << " B (factor "
           << fixed(static_cast<double>(sizes.naive_bytes) / static_cast<double>(file_payload), 2) << ")\n";
  out.text << "estimated execution " << fixed(dense_time.total_us() / 1000.0, 3) << " ms dense, "
           << fixed(sparse_time.total_us() / 1000.0, 3) << " ms compressed\n";
  if (!samples.empty()) {
    const double before = accuracy(m.spec, m.params, samples);
    const double after = accuracy(m.spec, decompress(c), samples);
    out.report["accuracy_before"] = before;
    out.report["accuracy_after"] = after;
    out.text << "candidate accuracy " << fixed(100 * before, 2) << "% before, " << fixed(100 * after, 2)
             << "% after compression\n";
  }
  out.text << "wrote " << o.out << "\n";
  out.print();
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateOptions {
  std::string arch;
  std::string model;
  std::string cost;
  std::string budget;
  std::size_t bytes_per_param = 0;
  bool sweep = false;
};

std::string read_text(const std::string& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

json report_json(const ResourceReport& r) {
  return json{{"weights", r.weights},
              {"parameters", r.parameters},
              {"neurons", r.neurons},
              {"ram_variables", r.ram_variables},
              {"ram_limiting_layer", r.limiting_layer},
              {"ram_bytes", r.ram_bytes},
              {"ram_limit_bytes", r.ram_limit_bytes},
              {"flash_bytes", r.flash_bytes},
              {"flash_limit_bytes", r.flash_limit_bytes},
              {"max_parameters", r.max_parameters},
              {"mac_ms", r.exec_time.mac_us / 1000.0},
              {"activation_ms", r.exec_time.activation_us / 1000.0},
              {"total_ms", r.exec_time.total_us() / 1000.0},
              {"fits_flash", r.fits_flash},
              {"fits_ram", r.fits_ram}};
}

std::string activation_chain(const ModelSpec& spec) {
  std::string s;
  for (const auto& l : spec.layers) s += (s.empty() ? "" : " - ") + std::string(to_string(l.activation));
  return s;
}

void run_estimate(const Global& g, const CLI::App& app, const EstimateOptions& o) {
  if (o.arch.empty() == o.model.empty()) throw Error(ErrorCode::InvalidArgument, "give exactly one of --arch or --model");
  const ModelSpec spec = o.arch.empty() ? load_any_model(o.model).spec : parse_architecture(o.arch);
  const CostModel cost = o.cost.empty() ? CostModel{} : parse_cost_model(read_text(o.cost));
  Budget budget = o.budget.empty() ? Budget{} : parse_budget(read_text(o.budget));
  if (o.bytes_per_param) budget.bytes_per_parameter = o.bytes_per_param;

  const auto r = check_fit(spec, budget, cost);
  Output out(g, app);
  out.report["architecture"] = format_architecture(spec);
  out.report["resources"] = report_json(r);
  auto& t = out.text;
  t << "architecture      " << format_architecture(spec) << "\n";
  t << "weights (MACs)    " << r.weights << "\n";
  t << "parameters        " << r.parameters << "\n";
  t << "neurons           " << r.neurons << "\n";
  t << "flash             " << r.flash_bytes << " / " << r.flash_limit_bytes << " B at "
    << budget.bytes_per_parameter << " B/parameter (max " << r.max_parameters << " parameters) "
    << (r.fits_flash ? "fits" : "DOES NOT FIT") << "\n";
  t << "RAM variables     " << r.ram_variables << " (" << r.ram_bytes << " / " << r.ram_limit_bytes
    << " B, limiting layer " << r.limiting_layer << ") " << (r.fits_ram ? "fits" : "DOES NOT FIT") << "\n";
  t << "execution time    " << fixed(r.exec_time.mac_us / 1000.0, 3) << " ms MAC + "
    << fixed(r.exec_time.activation_us / 1000.0, 3) << " ms activations = "
    << fixed(r.exec_time.total_us() / 1000.0, 3) << " ms\n";

  if (o.sweep) {
    constexpr Activation kHidden[] = {Activation::Sigmoid, Activation::Tanh, Activation::HardSigmoid,
                                      Activation::Softsign, Activation::Relu};
    constexpr Activation kOutput[] = {Activation::Softmax, Activation::Max, Activation::ApproxSoftmax};
    json rows = json::array();
    t << "\nactivation sweep (hidden layers share one activation)\n";
    t << "  activations                                activation ms   total ms\n";
    for (auto out_act : kOutput) {
      for (auto hidden : kHidden) {
        ModelSpec variant = spec;
        for (std::size_t l = 0; l + 1 < variant.layers.size(); ++l) variant.layers[l].activation = hidden;
        variant.layers.back().activation = out_act;
        const auto time = estimate_exec_time(variant, cost);
        const std::string name = activation_chain(variant);
        char buf[160];
        std::snprintf(buf, sizeof buf, "  %-42s %12.3f %10.3f\n", name.c_str(), time.activation_us / 1000.0,
                      time.total_us() / 1000.0);
        t << buf;
        rows.push_back({{"activations", name},
                        {"activation_ms", time.activation_us / 1000.0},
                        {"total_ms", time.total_us() / 1000.0}});
      }
    }
    out.report["sweep"] = rows;
  }
  out.print();
}

// ---------------------------------------------------------------------------
// infer

struct InferOptions {
  std::string model;
  std::string data;
  std::string mode = "auto";
  bool approx_exp = false;
};

void run_infer(const Global& g, const CLI::App& app, const InferOptions& o) {
  const auto m = load_any_model(o.model);
  const Dataset data = load_dataset(o.data);
  const std::string mode = o.mode == "auto" ? auto_mode(m.spec) : o.mode;
  if (mode == "ffnn-candidates" && m.spec.has_recurrent()) {
    throw Error(ErrorCode::InvalidArgument, "ffnn-candidates mode needs an all-dense model");
  }
  ExecOptions opts;
  opts.exp_mode = o.approx_exp ? ExpMode::Approximate : ExpMode::Exact;
  const auto events = recognize(m.spec, m.params, data.sequence.images, mode, {}, opts);
  const auto time = estimate_exec_time(m.spec);

  Output out(g, app);
  out.report["mode"] = mode;
  out.report["estimated_ms_per_inference"] = time.total_us() / 1000.0;
  json list = json::array();
  for (const auto& e : events) list.push_back({{"frame", e.frame}, {"gesture", to_string(e.gesture)}});
  out.report["events"] = list;
  out.text << "mode " << mode << ", " << data.sequence.size() << " frames, " << events.size() << " events\n";
  out.text << "estimated target execution " << fixed(time.total_us() / 1000.0, 3) << " ms per inference\n";
  for (const auto& e : events) out.text << e.frame << " " << to_string(e.gesture) << "\n";
  out.print();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tiny neural-network gesture classifiers for microcontrollers"};
  app.footer(kArchHelp);
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value file ([command] sections)");

  Global global;
  app.add_option("--seed", global.seed, "Seed for all randomness")->capture_default_str();
  app.add_flag("--json", global.json, "Print a machine-readable JSON report");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Synthesize an annotated gesture recording");
  synth_cmd->add_option("--out", synth.out, "Dataset file to write")->required();
  synth_cmd->add_option("--annotations", synth.annotations, "Also write the annotations as '<frame> <gesture>' lines");
  synth_cmd->add_option("--per-class", synth.corpus.per_class, "Instances per class")->capture_default_str();
  synth_cmd->add_option("--width", synth.corpus.width, "Sensor columns")->capture_default_str();
  synth_cmd->add_option("--height", synth.corpus.height, "Sensor rows")->capture_default_str();
  synth_cmd->add_option("--session-size", synth.corpus.session_size, "Instances per lighting session")->capture_default_str();
  synth_cmd->add_option("--gap", synth.corpus.gap, "Steady frames around each instance")->capture_default_str();
  synth_cmd->add_option("--speed-min", synth.corpus.speed_min)->capture_default_str();
  synth_cmd->add_option("--speed-max", synth.corpus.speed_max)->capture_default_str();
  synth_cmd->add_option("--occluder-min", synth.corpus.occluder_min)->capture_default_str();
  synth_cmd->add_option("--occluder-max", synth.corpus.occluder_max)->capture_default_str();
  synth_cmd->add_option("--background-min", synth.corpus.background_min)->capture_default_str();
  synth_cmd->add_option("--background-max", synth.corpus.background_max)->capture_default_str();
  synth_cmd->add_option("--contrast-min", synth.corpus.contrast_min)->capture_default_str();
  synth_cmd->add_option("--contrast-max", synth.corpus.contrast_max)->capture_default_str();
  synth_cmd->add_option("--noise-max", synth.corpus.noise_max, "Largest noise sigma (ADC counts)")->capture_default_str();
  synth_cmd->add_option("--brightness-max", synth.corpus.brightness_max)->capture_default_str();
  synth_cmd->add_option("--gamma-min", synth.corpus.gamma_min)->capture_default_str();
  synth_cmd->add_option("--gamma-max", synth.corpus.gamma_max)->capture_default_str();
  synth_cmd->add_option("--fps", synth.fps, "Frame rate stored in the dataset")->capture_default_str();

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a recording");
  train_cmd->add_option("--data", train.data, "Training dataset")->required();
  train_cmd->add_option("--out", train.out, "Model file to write")->required();
  train_cmd->add_option("--arch", train.arch, "Architecture string")->capture_default_str();
  train_cmd->add_option("--mode", train.mode, "ffnn or rnn-phases")
      ->check(CLI::IsMember({"ffnn", "rnn-phases"}))
      ->capture_default_str();
  train_cmd->add_option("--validation", train.validation, "Held-out recording evaluated after training");
  train_cmd->add_option("--optimizer", train.optimizer, "adam or sgd")
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs)->capture_default_str();
  train_cmd->add_option("--lr", train.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--batch", train.batch, "Minibatch size")->capture_default_str();
  train_cmd->add_option("--holdout", train.holdout, "Fraction of samples kept for validation")->capture_default_str();
  train_cmd->add_option("--clutter", train.clutter, "Random NoGesture candidates added (ffnn)")->capture_default_str();
  train_cmd->add_option("--horizon", train.horizon, "Truncated BPTT horizon (rnn)")->capture_default_str();
  train_cmd->add_option("--segment", train.segment, "Frames per training sequence (rnn)")->capture_default_str();
  train_cmd->add_option("--tolerance", train.tolerance, "Annotation window in frames")->capture_default_str();
  train_cmd->add_option("--alpha", train.alpha, "Rolling-statistics factor (12-feature rnn)")->capture_default_str();

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Measure recognition accuracy on a recording");
  eval_cmd->add_option("--data", eval.data, "Annotated dataset")->required();
  eval_cmd->add_option("--model", eval.model, "Model or compressed model file");
  eval_cmd->add_option("--events", eval.events, "Evaluate '<frame> <gesture>' lines instead of a model");
  eval_cmd->add_option("--mode", eval.mode, "auto, ffnn-candidates, rnn-phases or rnn-gestures")
      ->check(CLI::IsMember({"auto", "ffnn-candidates", "rnn-phases", "rnn-gestures"}))
      ->capture_default_str();
  eval_cmd->add_option("--tolerance", eval.tolerance, "Frames allowed before or after an annotation")->capture_default_str();

  CompressOptions compress;
  auto* compress_cmd = app.add_subcommand("compress", "Prune, weight-share and encode a trained FFNN");
  compress_cmd->add_option("--model", compress.model, "Model file")->required();
  compress_cmd->add_option("--out", compress.out, "Compressed model file to write")->required();
  compress_cmd->add_option("--density", compress.density, "Fraction of weights kept per layer")->capture_default_str();
  compress_cmd->add_option("--k", compress.k, "Clusters per layer (0: one per weight)")->capture_default_str();
  compress_cmd->add_flag("--huffman", compress.huffman, "Huffman-code the weight stream");
  compress_cmd->add_option("--retrain-data", compress.retrain_data, "Dataset used for retraining after each stage");
  compress_cmd->add_option("--retrain-epochs", compress.retrain_epochs)->capture_default_str();
  compress_cmd->add_option("--lr", compress.learning_rate, "Retraining learning rate")->capture_default_str();

  EstimateOptions estimate;
  auto* estimate_cmd = app.add_subcommand("estimate", "Static flash, RAM and execution-time estimate");
  estimate_cmd->add_option("--arch", estimate.arch, "Architecture string");
  estimate_cmd->add_option("--model", estimate.model, "Model file");
  estimate_cmd->add_option("--cost", estimate.cost, "Cost model file (key = microseconds)");
  estimate_cmd->add_option("--budget", estimate.budget, "Budget file (key = value)");
  estimate_cmd->add_option("--bytes-per-param", estimate.bytes_per_param, "Override bytes per parameter (1, 2 or 4)")
      ->check(CLI::IsMember({1, 2, 4}));
  estimate_cmd->add_flag("--sweep", estimate.sweep, "Tabulate execution time over activation choices");

  InferOptions infer;
  auto* infer_cmd = app.add_subcommand("infer", "Run recognition over a recording and print gesture events");
  infer_cmd->add_option("--model", infer.model, "Model or compressed model file")->required();
  infer_cmd->add_option("--data", infer.data, "Dataset with the recording")->required();
  infer_cmd->add_option("--mode", infer.mode, "auto, ffnn-candidates, rnn-phases or rnn-gestures")
      ->check(CLI::IsMember({"auto", "ffnn-candidates", "rnn-phases", "rnn-gestures"}))
      ->capture_default_str();
  infer_cmd->add_flag("--approx-exp", infer.approx_exp, "Use the fast exponential approximation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) run_synth(global, *synth_cmd, synth);
    else if (*train_cmd) run_train(global, *train_cmd, train);
    else if (*eval_cmd) run_eval(global, *eval_cmd, eval);
    else if (*compress_cmd) run_compress(global, *compress_cmd, compress);
    else if (*estimate_cmd) run_estimate(global, *estimate_cmd, estimate);
    else if (*infer_cmd) run_infer(global, *infer_cmd, infer);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
