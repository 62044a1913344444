// gground: command line front end for the data pipeline stages.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "gground/stages.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gground;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

PixelDims parse_dims(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw Error(Errc::InvalidArgument, "dims must look like 1280x720");
  try {
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw Error(Errc::InvalidArgument, "dims must look like 1280x720");
  }
}

ReweightScheme scheme_from_string(const std::string& s) {
  if (s == "uniform") return ReweightScheme::uniform();
  if (s == "decimal") return ReweightScheme::decimal();
  if (s == "sqrt10") return ReweightScheme::sqrt10();
  if (s == "ln10") return ReweightScheme::ln10();
  throw Error(Errc::InvalidScheme, "unknown scheme '" + s + "'");
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GUI grounding data pipeline"};
  app.require_subcommand(1);
  std::string stage;

  // Shared option holders; each subcommand binds what it needs.
  std::string input, output, audit, manifest, image_dir, work_dir, out_dir, responses, rejects;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  auto add_io = [&](CLI::App* sub, bool needs_output = true) {
    sub->add_option("--input,-i", input, "input JSONL")->required();
    auto* o = sub->add_option("--output,-o", output, "output file");
    if (needs_output) o->required();
    sub->add_option("--manifest", manifest, "run manifest path (default <output>.manifest.json)");
  };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "64-bit job seed")->required(); };
  auto add_workers = [&](CLI::App* sub) {
    sub->add_option("--workers", workers, "worker threads")->check(CLI::Range(1u, 256u));
  };

  // cap-domains
  std::size_t cap = 50;
  auto* cap_cmd = app.add_subcommand("cap-domains", "cap the number of pages per domain");
  add_io(cap_cmd);
  add_seed(cap_cmd);
  cap_cmd->add_option("--cap", cap, "pages kept per domain");

  // plan-render
  int aspect_steps = 10;
  std::string resolution;
  auto* plan_cmd = app.add_subcommand("plan-render", "choose render resolution and aspect per page");
  add_io(plan_cmd);
  add_seed(plan_cmd);
  plan_cmd->add_option("--aspect-steps", aspect_steps, "number of aspect steps N");
  plan_cmd->add_option("--resolution", resolution, "fixed class: 1080p, 2.5k or 4k");

  // filter
  FilterConfig fcfg;
  auto* filter_cmd = app.add_subcommand("filter", "apply retention, dedup and pixel filters");
  add_io(filter_cmd);
  add_workers(filter_cmd);
  filter_cmd->add_option("--audit", audit, "audit JSONL")->required();
  filter_cmd->add_option("--containment-iou", fcfg.containment_iou);
  filter_cmd->add_option("--empty-std", fcfg.empty_std);
  filter_cmd->add_option("--text-aspect", fcfg.text_aspect);

  // resample
  GridSamplerConfig gcfg;
  auto* resample_cmd = app.add_subcommand("resample", "grid re-sampling of element centers");
  add_io(resample_cmd);
  add_seed(resample_cmd);
  resample_cmd->add_option("--audit", audit, "audit JSONL for removed elements");
  resample_cmd->add_option("--n", gcfg.n, "grid columns");
  resample_cmd->add_option("--m", gcfg.m, "grid rows");
  resample_cmd->add_option("--psi", gcfg.psi, "sampling factor");

  // select
  auto* select_cmd = app.add_subcommand("select", "pick one element per screen");
  add_io(select_cmd);
  add_seed(select_cmd);
  add_workers(select_cmd);

  // augment
  AugConfig acfg;
  std::string canvas = "1280x720", format = "point";
  bool no_trace = false;
  auto* aug_cmd = app.add_subcommand("augment", "random crop, resize and pad into training samples");
  add_io(aug_cmd);
  add_seed(aug_cmd);
  add_workers(aug_cmd);
  aug_cmd->add_option("--image-dir", image_dir, "directory for augmented PNGs")->required();
  aug_cmd->add_option("--canvas", canvas, "canvas WxH");
  aug_cmd->add_option("--format", format, "target format: point, xyxy, xywh, midwh");
  aug_cmd->add_option("--random-crop", acfg.random_crop);
  aug_cmd->add_option("--min-crop", acfg.min_crop);
  aug_cmd->add_option("--random-resize", acfg.random_resize);
  aug_cmd->add_option("--max-screen-size", acfg.max_screen_size);
  aug_cmd->add_flag("--no-trace", no_trace, "omit draw traces");

  // regen
  EndpointConfig ecfg;
  bool dry_run = false;
  double rate = 1.0;
  int timeout_ms = 60000;
  auto* regen_cmd = app.add_subcommand("regen", "generate reference expressions for selected elements");
  add_io(regen_cmd);
  add_seed(regen_cmd);
  regen_cmd->add_option("--work-dir", work_dir, "directory for highlight and crop images")->required();
  regen_cmd->add_option("--responses", responses, "canned responses JSONL instead of the endpoint");
  regen_cmd->add_option("--rejects", rejects, "JSONL of samples whose response failed to parse");
  regen_cmd->add_flag("--dry-run", dry_run, "write request bodies without calling the endpoint");
  regen_cmd->add_option("--base-url", ecfg.base_url);
  regen_cmd->add_option("--path", ecfg.path);
  regen_cmd->add_option("--model", ecfg.model_name);
  regen_cmd->add_option("--token-env", ecfg.auth_token_env_var, "env var holding the bearer token");
  regen_cmd->add_option("--max-retries", ecfg.max_retries);
  regen_cmd->add_option("--timeout-ms", timeout_ms);
  regen_cmd->add_option("--rate", rate, "requests per second");

  // triage
  std::string pairing = "max_k";
  std::size_t max_k = 4;
  RoundSchedule schedule;
  int round_index = 0;
  auto* triage_cmd = app.add_subcommand("triage", "build preference pairs and reject-sampling sets");
  triage_cmd->add_option("--input,-i", input, "rollouts JSONL")->required();
  triage_cmd->add_option("--out-dir", out_dir, "output directory")->required();
  triage_cmd->add_option("--manifest", manifest);
  add_seed(triage_cmd);
  add_workers(triage_cmd);
  triage_cmd->add_option("--pairing", pairing, "first_pair, all_pairs or max_k");
  triage_cmd->add_option("--max-k", max_k);
  triage_cmd->add_option("--format", format, "rollout output format");
  triage_cmd->add_option("--rounds", schedule.rounds);
  triage_cmd->add_option("--refresh-steps", schedule.refresh_interval_steps);
  triage_cmd->add_option("--round-index", round_index);

  // eval
  std::string predictions, report_csv, click_source = "box_center", box_format = "xyxy", adapter = "auto";
  std::vector<std::string> slice_keys{"platform", "kind", "app"}, averages;
  bool require_images = false;
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against a benchmark manifest");
  eval_cmd->add_option("--manifest-in,--benchmark", input, "benchmark manifest JSONL")->required();
  eval_cmd->add_option("--predictions", predictions, "predictions JSONL")->required();
  eval_cmd->add_option("--report", output, "report JSON")->required();
  eval_cmd->add_option("--csv", report_csv, "report CSV");
  eval_cmd->add_option("--manifest", manifest);
  eval_cmd->add_option("--click-source", click_source, "point_direct or box_center");
  eval_cmd->add_option("--box-format", box_format);
  eval_cmd->add_option("--adapter", adapter, "auto, canonical, screenspot, screenspot_pro");
  eval_cmd->add_option("--slice-keys", slice_keys)->delimiter(',');
  eval_cmd->add_option("--average", averages, "suite:key=v1,v2 (repeatable)");
  eval_cmd->add_flag("--require-images", require_images, "missing images are errors");

  // flops
  double params = 0, image_tokens = 0;
  auto* flops_cmd = app.add_subcommand("flops", "6ND compute estimate or Pareto table");
  flops_cmd->add_option("--params", params);
  flops_cmd->add_option("--image-tokens", image_tokens);
  flops_cmd->add_option("--entries", input, "JSONL of {name, params, image_tokens, score}");
  flops_cmd->add_option("--output,-o", output, "Pareto CSV");
  flops_cmd->add_option("--manifest", manifest);

  // serve
  std::string screens, log, host = "127.0.0.1", token, cors, port_file;
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP review service");
  serve_cmd->add_option("--screens", screens, "screens JSONL")->required();
  serve_cmd->add_option("--log", log, "verdict log (default <screens>.verdicts.jsonl)");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port, "0 picks a free port");
  serve_cmd->add_option("--token", token, "shared token required in X-Review-Token");
  serve_cmd->add_option("--cors-origin", cors);
  serve_cmd->add_option("--port-file", port_file, "write the bound port here");

  // export
  auto* export_cmd = app.add_subcommand("export", "write reviewed screens without removed elements");
  export_cmd->add_option("--screens", screens, "screens JSONL")->required();
  export_cmd->add_option("--log", log, "verdict log (default <screens>.verdicts.jsonl)");
  export_cmd->add_option("--output,-o", output)->required();
  export_cmd->add_option("--manifest", manifest);

  // labels
  int target = 0;
  double psi = 10;
  std::string distance = "squared";
  auto* labels_cmd = app.add_subcommand("labels", "smoothed digit labels");
  labels_cmd->add_option("--target", target, "target digit")->required()->check(CLI::Range(0, 9));
  labels_cmd->add_option("--psi", psi);
  labels_cmd->add_option("--distance", distance, "squared or absolute");

  // weights
  std::string text, scheme = "decimal";
  auto* weights_cmd = app.add_subcommand("weights", "per-token digit position weights");
  weights_cmd->add_option("--text", text, "coordinate text")->required();
  weights_cmd->add_option("--scheme", scheme, "uniform, decimal, sqrt10, ln10");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const auto* sub = app.get_subcommands().front();
  stage = sub->get_name();
  try {
    if (sub == cap_cmd) {
      print(stages::cap_domains({input, output, manifest, seed, cap}));
    } else if (sub == plan_cmd) {
      stages::PlanRenderArgs a{input, output, manifest, seed, aspect_steps, std::nullopt};
      if (!resolution.empty()) a.resolution = resolution;
      print(stages::plan_render_stage(a));
    } else if (sub == filter_cmd) {
      print(stages::filter_stage({input, output, audit, manifest, fcfg, workers}));
    } else if (sub == resample_cmd) {
      print(stages::resample_stage({input, output, audit, manifest, gcfg, seed}));
    } else if (sub == select_cmd) {
      print(stages::select_stage({input, output, manifest, seed, workers}));
    } else if (sub == aug_cmd) {
      stages::AugmentArgs a;
      a.input = input;
      a.output = output;
      a.image_dir = image_dir;
      a.manifest = manifest;
      a.cfg = acfg;
      a.canvas = parse_dims(canvas);
      a.format = coord_format_from_string(format);
      a.seed = seed;
      a.workers = workers;
      a.trace = !no_trace;
      print(stages::augment_stage(a));
    } else if (sub == regen_cmd) {
      stages::RegenArgs a;
      a.input = input;
      a.output = output;
      a.work_dir = work_dir;
      a.manifest = manifest;
      a.rejects = rejects;
      if (!responses.empty()) a.responses = responses;
      a.dry_run = dry_run;
      ecfg.timeout = std::chrono::milliseconds(timeout_ms);
      a.endpoint = ecfg;
      a.rate_per_sec = rate;
      a.seed = seed;
      print(stages::regen_stage(a));
    } else if (sub == triage_cmd) {
      stages::TriageArgs a;
      a.input = input;
      a.out_dir = out_dir;
      a.manifest = manifest;
      a.policy = {stages::pairing_kind_from_string(pairing), max_k};
      a.format = coord_format_from_string(format);
      a.schedule = schedule;
      a.round_index = round_index;
      a.seed = seed;
      a.workers = workers;
      print(stages::triage_stage(a));
    } else if (sub == eval_cmd) {
      stages::EvalArgs a;
      a.manifest_in = input;
      a.predictions = predictions;
      a.report_json = output;
      a.report_csv = report_csv;
      a.manifest = manifest;
      a.load.adapter = benchmark_adapter_from_string(adapter);
      a.load.require_images = require_images;
      a.score.click_source = click_source_from_string(click_source);
      a.score.box_format = coord_format_from_string(box_format);
      a.score.slice_keys = slice_keys;
      a.averages = averages;
      print(stages::eval_stage(a));
    } else if (sub == flops_cmd) {
      if (!input.empty()) {
        if (output.empty()) throw Error(Errc::InvalidArgument, "--entries needs --output");
        print(stages::flops_table_stage(input, output, manifest));
      } else {
        const auto c = flops_estimate(params, image_tokens);
        print({{"params", c.params}, {"image_tokens", c.image_tokens}, {"flops", c.flops}});
      }
    } else if (sub == serve_cmd) {
      if (log.empty()) log = screens + ".verdicts.jsonl";
      ReviewStore store(screens, log);
      ReviewServerOptions opt;
      if (!token.empty()) opt.token = token;
      opt.cors_origin = cors;
      ReviewServer server(&store, opt);
      if (!server.bind(host, port)) throw Error(Errc::IoFailure, "cannot bind " + host + ":" + std::to_string(port));
      if (!port_file.empty()) write_text_file(port_file, std::to_string(server.port()) + "\n");
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::thread t([&] { server.run(); });
      std::cerr << "serving on " << host << ":" << server.port() << "\n";
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      t.join();
    } else if (sub == export_cmd) {
      if (log.empty()) log = screens + ".verdicts.jsonl";
      print(stages::export_stage(screens, log, output, manifest));
    } else if (sub == labels_cmd) {
      SmoothingConfig c;
      c.psi = psi;
      if (distance == "squared") {
        c.distance = DigitDistance::Squared;
      } else if (distance == "absolute") {
        c.distance = DigitDistance::Absolute;
      } else {
        throw Error(Errc::InvalidArgument, "distance must be squared or absolute");
      }
      const auto labels = smoothed_labels(VocabSpec::with_leading_digits(10), static_cast<std::size_t>(target), c);
      print({{"target", target}, {"psi", psi}, {"distance", distance}, {"labels", labels}});
    } else if (sub == weights_cmd) {
      const auto places = annotate_digit_places(text);
      print({{"text", text}, {"scheme", scheme}, {"weights", reweight_weights(places, scheme_from_string(scheme))}});
    }
  } catch (const Error& e) {
    std::cerr << json{{"stage", stage}, {"error", to_string(e.code())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"stage", stage}, {"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
