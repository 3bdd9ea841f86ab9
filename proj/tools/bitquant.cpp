// bitquant: command-line front end for the quantization toolkit.
//
//   bitquant quantize MODEL OUTDIR --scheme asymm --bits 6
//   bitquant eval MODEL DATA --scheme asymm --bits 2..8 --out DIR
//   bitquant cluster CONFUSION.csv --merges 1 --out DIR
//   bitquant report MODEL --scheme asymm,pow2 --bits 6 --out DIR
//   bitquant bench --layers 64x256 --reps 30 --out DIR
//   bitquant make-fixtures --out DIR
//
// Exit status: 0 success, 2 usage or validation error, 1 runtime failure.

#include <bitquant/bitquant.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bitquant;

namespace {

struct RunConfig {
  std::string subcommand;
  std::string model_path;
  std::string data_path;
  std::string confusion_path;
  std::string out_dir = ".";
  std::string scheme_text = "asymm";
  std::string bits_text;
  std::string granularity_text = "tensor";
  std::string layers_text = "64x256,256x1024";
  bool quantize_bias = false;
  bool fold_bn = false;
  bool keep_bn_stats = false;
  bool logit_sum_grouping = false;
  std::size_t merges = 1;
  std::size_t repetitions = 30;
  std::size_t frames = 64;
  std::uint64_t seed = kFixtureSeed;

  std::vector<QuantScheme> schemes;
  std::vector<unsigned> bits;
  Granularity granularity = Granularity::PerTensor;
  std::vector<LayerShape> layers;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

unsigned parse_uint(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ArgumentError("bad " + what + " '" + s + "'");
  return static_cast<unsigned>(v);
}

// "6", "2,4,8", "2..8" or "2-8". Widths must be in [2,8]; 32 is accepted where
// the FP32 reference makes sense.
std::vector<unsigned> parse_bits(const std::string& text, bool allow_passthrough) {
  std::vector<unsigned> out;
  for (const auto& part : split_list(text)) {
    auto dots = part.find("..");
    auto dash = part.find('-');
    if (dots != std::string::npos || (dash != std::string::npos && dash > 0)) {
      const auto cut = dots != std::string::npos ? dots : dash;
      const auto lo = parse_uint(part.substr(0, cut), "bit range");
      const auto hi = parse_uint(part.substr(cut + (dots != std::string::npos ? 2 : 1)), "bit range");
      if (lo > hi) throw ArgumentError("empty bit range '" + part + "'");
      for (unsigned n = hi + 1; n-- > lo;) out.push_back(n);
    } else {
      out.push_back(parse_uint(part, "bit width"));
    }
  }
  for (auto n : out)
    if (!(allow_passthrough && n == kPassthroughBits)) check_bit_width(n);
  return out;
}

std::vector<LayerShape> parse_layers(const std::string& text) {
  std::vector<LayerShape> out;
  for (const auto& part : split_list(text)) {
    const auto x = part.find('x');
    if (x == std::string::npos) throw ArgumentError("layer shape '" + part + "' must look like OUTxIN");
    out.push_back({parse_uint(part.substr(0, x), "layer outputs"), parse_uint(part.substr(x + 1), "layer inputs")});
    if (out.back().inputs == 0 || out.back().outputs == 0) throw ArgumentError("layer shape must be nonzero");
  }
  return out;
}

void validate(RunConfig& c) {
  c.schemes.clear();
  for (const auto& s : split_list(c.scheme_text)) c.schemes.push_back(parse_scheme(s));
  if (c.granularity_text == "tensor")
    c.granularity = Granularity::PerTensor;
  else if (c.granularity_text == "channel")
    c.granularity = Granularity::PerChannel;
  else
    throw ArgumentError("granularity must be 'tensor' or 'channel'");

  const auto& cmd = c.subcommand;
  if (cmd == "quantize") {
    c.bits = parse_bits(c.bits_text.empty() ? "8" : c.bits_text, false);
    if (c.bits.size() != 1) throw ArgumentError("quantize takes exactly one bit width");
    if (c.schemes.size() != 1) throw ArgumentError("quantize takes exactly one scheme");
  } else if (cmd == "eval") {
    c.bits = parse_bits(c.bits_text.empty() ? "2..8" : c.bits_text, true);
    std::erase(c.bits, kPassthroughBits);  // the FP32 row is always emitted
    if (c.schemes.size() != 1) throw ArgumentError("eval takes exactly one scheme");
  } else if (cmd == "cluster") {
    if (c.logit_sum_grouping) {
      if (c.model_path.empty() || c.data_path.empty())
        throw ArgumentError("--logit-sum-grouping needs --model and --data");
      c.bits = parse_bits(c.bits_text.empty() ? "3" : c.bits_text, true);
      if (c.bits.size() != 1) throw ArgumentError("cluster takes one bit width");
      if (c.schemes.size() != 1) throw ArgumentError("cluster takes one scheme");
    }
  } else if (cmd == "report") {
    c.bits = parse_bits(c.bits_text.empty() ? "6" : c.bits_text, true);
  } else if (cmd == "bench") {
    c.layers = parse_layers(c.layers_text);
    if (c.repetitions < kMinBenchRepetitions)
      throw ArgumentError("--reps must be at least " + std::to_string(kMinBenchRepetitions));
  }
}

QuantizeOptions quantize_options(const RunConfig& c, QuantScheme s, unsigned bits) {
  QuantizeOptions o;
  o.scheme = s;
  o.bits = bits;
  o.granularity = c.granularity;
  o.quantize_bias = c.quantize_bias;
  o.fold_bn = c.fold_bn;
  o.quantize_bn_stats = !c.keep_bn_stats;
  return o;
}

std::string header_line(const RunConfig& c) {
  return "# bitquant " + c.subcommand + " seed=" + std::to_string(c.seed) + "\n";
}

fs::path prepare_out(const RunConfig& c) {
  fs::path out(c.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
  return out;
}

std::string tag(QuantScheme s, unsigned bits) { return std::string(to_string(s)) + std::to_string(bits); }

int cmd_quantize(const RunConfig& c) {
  const auto model = load_model(c.model_path);
  const auto out = prepare_out(c);
  const auto scheme = c.schemes.front();
  const auto bits = c.bits.front();
  const auto q = quantize_model(model, quantize_options(c, scheme, bits));
  for (const auto& w : q.warnings) std::cerr << "warning: layer " << w.layer << ": " << w.message << " (" << w.tensor << ")\n";

  const auto stem = fs::path(c.model_path).stem().string() + "." + tag(scheme, bits);
  save_model(q.simulated, out / (stem + ".bqnt"));
  save_packed(*q.packed, out / (stem + ".bqpk"));

  // compare against the source the quantizer saw (folded when --fold-bn)
  const ModelFile source = c.fold_bn ? fold_batchnorm(model) : model;
  std::string csv = header_line(c) + kBitEfficiencyCsvHeader;
  for (const auto& t : q.tensors)
    csv += bit_efficiency_csv_row(t.name, scheme, bits, bit_efficiency(source.at(t.name), q.simulated.at(t.name), bits));
  write_text_file(out / (stem + ".be.csv"), csv);

  std::cout << header_line(c) << "quantized " << q.tensors.size() << " tensors with " << to_string(scheme) << " at "
            << bits << " bits; packed payload " << q.packed->payload_bytes() << " bytes\n"
            << "wrote " << (out / (stem + ".bqnt")).string() << ", " << (out / (stem + ".bqpk")).string() << ", "
            << (out / (stem + ".be.csv")).string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& c) {
  const auto model = load_model(c.model_path);
  const auto data = load_dataset(c.data_path);
  const auto out = prepare_out(c);
  const auto scheme = c.schemes.front();
  const auto rows = bit_sweep(model, data, quantize_options(c, scheme, 8), c.bits);
  std::cout << header_line(c) << sweep_table(rows, scheme);
  write_text_file(out / "eval.csv", header_line(c) + sweep_csv(rows, scheme));
  for (const auto& r : rows) {
    const auto name = r.bits == kPassthroughBits ? std::string("confusion_fp32.csv") : "confusion_" + tag(scheme, r.bits) + ".csv";
    write_text_file(out / name, confusion_to_csv(r.result.confusion));
  }
  return 0;
}

int cmd_cluster(const RunConfig& c) {
  const auto cm = confusion_from_csv([&] {
    const auto b = read_file(c.confusion_path);
    return std::string(b.begin(), b.end());
  }());
  const auto grouping = propose_merge(cm, c.merges);
  const auto before = make_result(cm);
  auto after = regroup_eval(cm, grouping);
  if (c.logit_sum_grouping) {
    const auto model = load_model(c.model_path);
    const auto data = load_dataset(c.data_path);
    const auto bits = c.bits.front();
    const auto q = quantize_model(model, quantize_options(c, c.schemes.front(), bits));
    after = regroup_eval_logit_sum(Network(q.simulated), data, grouping);
  }
  const auto out = prepare_out(c);
  write_text_file(out / "grouping.txt", grouping_to_text(grouping));
  write_text_file(out / "grouped_confusion.csv", confusion_to_csv(after.confusion));
  char buf[160];
  std::snprintf(buf, sizeof buf, "accuracy before grouping %.2f%%, after grouping %.2f%% (%zu merges, %s)\n",
                100.0 * before.accuracy, 100.0 * after.accuracy, c.merges,
                c.logit_sum_grouping ? "logit-sum scoring" : "argmax-then-map scoring");
  std::cout << header_line(c) << buf << "groups:\n" << grouping_to_text(grouping);
  return 0;
}

int cmd_report(const RunConfig& c) {
  const auto model = load_model(c.model_path);
  const auto out = prepare_out(c);
  const auto report = measure_sizes(model, c.schemes, c.bits, c.granularity);
  std::cout << header_line(c) << size_report_table(report);
  write_text_file(out / "sizes.csv", header_line(c) + size_report_csv(report));
  write_text_file(out / "sizes.txt", header_line(c) + size_report_table(report));

  QuantizeOptions base = quantize_options(c, c.schemes.front(), kPassthroughBits);
  const auto names = quantizable_tensors(model, base);
  std::string quart = header_line(c) + kQuartileCsvHeader;
  std::string hist = header_line(c) + kHistogramCsvHeader;
  std::string be = header_line(c) + kBitEfficiencyCsvHeader;
  auto add_stats = [&](const std::string& label, const Tensor& t) {
    quart += quartiles_csv_rows(channel_quartiles(Tensor{label, t.shape, t.data}, 0));
    hist += histogram_csv_rows(label, weight_histogram(t, kBitEfficiencyBins));
  };
  for (const auto& n : names) add_stats(n + "@fp32", model.at(n));
  for (auto s : c.schemes)
    for (auto bits : c.bits) {
      if (bits == kPassthroughBits) continue;
      const auto q = quantize_model(model, quantize_options(c, s, bits));
      for (const auto& n : names) {
        add_stats(n + "@" + tag(s, bits), q.simulated.at(n));
        be += bit_efficiency_csv_row(n, s, bits, bit_efficiency(model.at(n), q.simulated.at(n), bits));
      }
      if (s == QuantScheme::PowerOfTwo) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "pow2 %u-bit: average exponent index bits %.2f\n", bits,
                      average_bit_levels(q.tensors));
        std::cout << buf;
      }
    }
  write_text_file(out / "quartiles.csv", quart);
  write_text_file(out / "histograms.csv", hist);
  write_text_file(out / "bit_efficiency.csv", be);
  return 0;
}

int cmd_bench(const RunConfig& c) {
  const auto out = prepare_out(c);
  const auto report = bench_latency(c.layers, c.repetitions, c.seed, c.frames);
  std::cout << header_line(c) << bench_table(report);
  write_text_file(out / "bench.csv", header_line(c) + bench_csv(report));
  return 0;
}

int cmd_make_fixtures(const RunConfig& c) {
  const auto out = prepare_out(c);
  const auto teacher = make_teacher_task(c.seed);
  const auto overlap = make_overlap_task(c.seed + 1);
  save_model(teacher.model, out / "teacher_cnn.bqnt");
  save_dataset(teacher.data, out / "teacher_cnn.bqds");
  save_model(overlap.model, out / "overlap_mlp.bqnt");
  save_dataset(overlap.data, out / "overlap_mlp.bqds");
  std::cout << header_line(c) << "wrote fixtures to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bitquant: data-free post-training weight quantization toolkit"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--scheme", cfg.scheme_text, "asymm|symm|pow2 (report accepts a comma list)");
    sub->add_option("--bits", cfg.bits_text, "bit width(s): N, N,M,... or LO..HI");
    sub->add_option("--granularity", cfg.granularity_text, "tensor|channel")->check(CLI::IsMember({"tensor", "channel"}));
    sub->add_flag("--quantize-bias", cfg.quantize_bias, "also quantize dense/conv biases");
    sub->add_flag("--fold-bn", cfg.fold_bn, "fold batchnorm into the preceding conv/dense first");
    sub->add_flag("--keep-bn-stats", cfg.keep_bn_stats, "leave batchnorm moving mean/var in FP32");
    sub->add_option("--seed", cfg.seed, "seed recorded in report headers");
    sub->add_option("--out", cfg.out_dir, "output directory");
  };

  auto* quantize = app.add_subcommand("quantize", "quantize a model and write simulated, packed and BE outputs");
  common(quantize);
  quantize->add_option("model", cfg.model_path, "input .bqnt model")->required()->check(CLI::ExistingFile);
  quantize->add_option("outdir", cfg.out_dir, "output directory");

  auto* eval = app.add_subcommand("eval", "bit-width sweep: accuracy table and confusion matrices");
  common(eval);
  eval->add_option("model", cfg.model_path, "input .bqnt model")->required()->check(CLI::ExistingFile);
  eval->add_option("data", cfg.data_path, "input .bqds dataset")->required()->check(CLI::ExistingFile);

  auto* cluster = app.add_subcommand("cluster", "merge confused classes and rescore");
  common(cluster);
  cluster->add_option("confusion", cfg.confusion_path, "confusion CSV from eval")->required()->check(CLI::ExistingFile);
  cluster->add_option("--merges", cfg.merges, "number of greedy merges (K)");
  cluster->add_flag("--logit-sum-grouping", cfg.logit_sum_grouping, "score groups by summed outputs (needs --model/--data)");
  cluster->add_option("--model", cfg.model_path, "model for logit-sum scoring")->check(CLI::ExistingFile);
  cluster->add_option("--data", cfg.data_path, "dataset for logit-sum scoring")->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "packed/compressed sizes and distribution statistics");
  common(report);
  report->add_option("model", cfg.model_path, "input .bqnt model")->required()->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench", "FP32 multiply vs integer shift dense-layer timing");
  common(bench);
  bench->add_option("--layers", cfg.layers_text, "comma list of OUTxIN layer shapes");
  bench->add_option("--reps", cfg.repetitions, "timed repetitions per path (>= 30)");
  bench->add_option("--frames", cfg.frames, "input vectors per repetition");

  auto* fixtures = app.add_subcommand("make-fixtures", "regenerate the seeded fixture models and datasets");
  common(fixtures);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    cfg.subcommand = app.get_subcommands().front()->get_name();
    validate(cfg);
    if (cfg.subcommand == "quantize") return cmd_quantize(cfg);
    if (cfg.subcommand == "eval") return cmd_eval(cfg);
    if (cfg.subcommand == "cluster") return cmd_cluster(cfg);
    if (cfg.subcommand == "report") return cmd_report(cfg);
    if (cfg.subcommand == "bench") return cmd_bench(cfg);
    if (cfg.subcommand == "make-fixtures") return cmd_make_fixtures(cfg);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
