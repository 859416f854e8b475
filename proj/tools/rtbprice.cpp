// rtbprice: replay traffic, analyze prices and anonymity, train models and
// run the collection server or the local engine.

#include <csignal>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "rtbprice/commands.hpp"
#include "rtbprice/engine.hpp"
#include "rtbprice/transport/http_server.hpp"

namespace {

using namespace rtbprice;

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw ParseError("--listen expects host:port");
  try {
    return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ParseError("bad port in --listen '" + listen + "'");
  }
}

// Blocks SIGINT/SIGTERM for every thread started afterwards; the caller
// waits for them with sigwait.
sigset_t block_termination_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

struct ServeOptions {
  std::string store;
  std::string listen = "127.0.0.1:8443";
  std::string data_dir = cmd::default_data_dir();
  std::optional<std::string> model;
  std::vector<std::string> profiles;
  std::optional<std::string> tls_cert;
  std::optional<std::string> tls_key;
  std::uint64_t seed = std::random_device{}();
};

int serve(const ServeOptions& o) {
  return cmd::guarded(std::cerr, [&] {
    const auto [host, port] = split_listen(o.listen);
    std::vector<std::string> profile_paths = o.profiles;
    if (profile_paths.empty()) profile_paths.push_back(o.data_dir + "/profiles/default.profile");
    std::map<std::string, GranularityProfile> accepted;
    for (const auto& p : profile_paths) {
      auto profile = GranularityProfile::load(p);
      accepted.emplace(profile.name(), std::move(profile));
    }
    const GranularityProfile& first = accepted.begin()->second;
    const pricing::ForestModel initial =
        o.model ? pricing::deserialize_model(cmd::read_file(*o.model))
                : transport::bundled_default_model(pricing::schema_for(first));

    std::optional<transport::TlsFiles> tls;
    if (o.tls_cert || o.tls_key) {
      if (!o.tls_cert || !o.tls_key) throw ParseError("--tls-cert and --tls-key go together");
      tls = transport::TlsFiles{*o.tls_cert, *o.tls_key};
    }

    const sigset_t signals = block_termination_signals();
    transport::ServerStore store(std::filesystem::path(o.store), {}, o.seed);
    for (const auto& d : store.load_diagnostics()) std::cerr << "store: skipped " << d << '\n';
    transport::ModelRegistry models(initial);
    transport::CollectionServer server(store, models, accepted, transport::system_now, tls);
    int bound = 0;
    try {
      bound = server.start(host, port);
    } catch (const Error& e) {
      throw ParseError(e.what());
    }
    std::cerr << "serving on " << host << ":" << bound << " (" << store.size() << " records, model version "
              << models.current()->version << ")\n";
    int sig = 0;
    sigwait(&signals, &sig);
    std::cerr << "shutting down\n";
    server.stop();
    return static_cast<int>(cmd::ok);
  });
}

struct EngineOptions {
  std::string listen = "127.0.0.1:8790";
  std::string data_dir = cmd::default_data_dir();
  std::optional<std::string> registry;
  std::optional<std::string> model;
  std::optional<std::string> profile;
  std::optional<std::string> collector;
  std::optional<std::string> location;
  std::int64_t delay_min = transport::DelayBounds{}.min_seconds;
  std::int64_t delay_max = transport::DelayBounds{}.max_seconds;
  std::uint64_t seed = std::random_device{}();
  int poll_seconds = 3600;
};

int engine(const EngineOptions& o) {
  return cmd::guarded(std::cerr, [&] {
    const auto [host, port] = split_listen(o.listen);
    const auto data = ReferenceData::load(o.data_dir, o.registry);
    const auto profile = GranularityProfile::load(o.profile.value_or(o.data_dir + "/profiles/default.profile"));
    std::optional<pricing::ForestModel> model;
    try {
      model = cmd::load_model_or_default(o.model, profile, std::cerr);
    } catch (const VersionError&) {
    }
    FixedGeoResolver geo(o.location);
    BatchSender sender;
    if (o.collector) sender = http_sender(*o.collector);
    LocalEngine eng(data, profile, std::move(model), geo, transport::default_model_price(), o.seed,
                    {o.delay_min, o.delay_max}, sender);

    const sigset_t signals = block_termination_signals();
    EngineServer server(eng);
    const int bound = server.start(host, port);
    std::cerr << "engine on " << host << ":" << bound << '\n';

    std::atomic<bool> running{true};
    std::thread ticker([&] {
      std::int64_t next_poll = 0;
      while (running) {
        eng.tick();
        const std::int64_t now = transport::system_now();
        if (o.collector && now >= next_poll) {
          Diagnostics diag;
          poll_model(eng, *o.collector, &diag);
          for (const auto& d : diag) std::cerr << d << '\n';
          next_poll = now + o.poll_seconds;
        }
        std::this_thread::sleep_for(std::chrono::seconds(1));
      }
    });
    int sig = 0;
    sigwait(&signals, &sig);
    running = false;
    ticker.join();
    server.stop();
    return static_cast<int>(cmd::ok);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RTB price transparency toolkit"};
  app.require_subcommand(1);

  std::string output = "table";
  auto add_output = [&](CLI::App* sub) {
    sub->add_option("--output", output, "table | csv | jsonl")->check(CLI::IsMember({"table", "csv", "jsonl"}));
  };

  cmd::ReplayOptions replay_opt;
  auto* replay = app.add_subcommand("replay", "Replay a capture log through the pricing pipeline");
  replay->add_option("log", replay_opt.log, "Replay log (JSONL)")->required();
  replay->add_option("--data-dir", replay_opt.data_dir, "Bundled data directory");
  replay->add_option("--registry", replay_opt.registry, "DSP registry file");
  replay->add_option("--model", replay_opt.model, "Model XML (default: bundled model)");
  replay->add_option("--profile", replay_opt.profile, "Reporting profile");
  replay->add_option("--location", replay_opt.location, "Country code the geo lookup returns");
  replay->add_option("--geo-file", replay_opt.geo_file, "File holding the country code");
  replay->add_option("--events", replay_opt.events_out, "Write the events (JSONL) here");
  add_output(replay);

  cmd::AnalyzePricesOptions prices_opt;
  auto* prices = app.add_subcommand("analyze-prices", "Price quantiles and CDFs per group");
  prices->add_option("events", prices_opt.events, "Events (JSONL)")->required();
  prices->add_option("--by", prices_opt.by, "day-of-week | time-of-day | iab | age | country | cookie-sync")
      ->required();
  prices->add_flag("--cdf", prices_opt.cdf, "Include CDF points");
  add_output(prices);

  cmd::AnalyzeAnonymityOptions anon_opt;
  auto* anon = app.add_subcommand("analyze-anonymity", "Surprisal and k-anonymity per profile");
  anon->add_option("events", anon_opt.events, "Events with `user` (JSONL); optional");
  anon->add_option("--profile", anon_opt.profiles, "Profile file (repeatable)")->required();
  anon->add_option("--subset", anon_opt.subset, "Restrict k-anonymity to these features")->delimiter(',');
  add_output(anon);

  cmd::TrainOptions train_opt;
  auto* train = app.add_subcommand("train", "Train a price model from cleartext events");
  train->add_option("events", train_opt.events, "Events (JSONL)")->required();
  train->add_option("--data-dir", train_opt.data_dir, "Bundled data directory");
  train->add_option("--profile", train_opt.profile, "Profile the features are aggregated under");
  train->add_option("--model-out,-o", train_opt.model_out, "Where to write the model XML")->required();
  train->add_option("--seed", train_opt.seed, "RNG seed");
  train->add_option("--trees", train_opt.trees, "Forest size")->check(CLI::Range(1, 10000));
  train->add_option("--max-depth", train_opt.max_depth, "Tree depth limit")->check(CLI::Range(1, 64));
  train->add_option("--holdout", train_opt.holdout, "Share of events held out for evaluation");
  train->add_option("--version", train_opt.version, "Model version stamped into the document");
  train->add_option("--trained-at", train_opt.trained_at, "Training timestamp (UTC seconds)");

  ServeOptions serve_opt;
  auto* serve_cmd = app.add_subcommand("serve", "Run the collection server");
  serve_cmd->add_option("--store", serve_opt.store, "Store directory")->required();
  serve_cmd->add_option("--listen", serve_opt.listen, "host:port");
  serve_cmd->add_option("--data-dir", serve_opt.data_dir, "Bundled data directory");
  serve_cmd->add_option("--model", serve_opt.model, "Model XML to serve (default: bundled model)");
  serve_cmd->add_option("--profile", serve_opt.profiles, "Accepted profile (repeatable)");
  serve_cmd->add_option("--tls-cert", serve_opt.tls_cert, "PEM certificate");
  serve_cmd->add_option("--tls-key", serve_opt.tls_key, "PEM private key");
  serve_cmd->add_option("--seed", serve_opt.seed, "Shuffle RNG seed");

  cmd::ExportModelOptions export_opt;
  auto* export_cmd = app.add_subcommand("export-model", "Write a model in canonical form");
  export_cmd->add_option("--model", export_opt.model, "Model XML (default: bundled model)");
  export_cmd->add_option("--data-dir", export_opt.data_dir, "Bundled data directory");
  export_cmd->add_option("--profile", export_opt.profile, "Profile for the bundled model's schema");
  export_cmd->add_option("-o,--out", export_opt.output, "Output file (default: stdout)");

  std::string har_in;
  std::optional<std::string> har_out;
  auto* har = app.add_subcommand("import-har", "Convert a HAR 1.2 capture to a replay log");
  har->add_option("har", har_in, "HAR file")->required();
  har->add_option("-o,--out", har_out, "Output file (default: stdout)");

  EngineOptions engine_opt;
  auto* engine_cmd = app.add_subcommand("engine", "Run the local engine the browser extension talks to");
  engine_cmd->add_option("--listen", engine_opt.listen, "host:port (loopback)");
  engine_cmd->add_option("--data-dir", engine_opt.data_dir, "Bundled data directory");
  engine_cmd->add_option("--registry", engine_opt.registry, "DSP registry file");
  engine_cmd->add_option("--model", engine_opt.model, "Model XML (default: bundled model)");
  engine_cmd->add_option("--profile", engine_opt.profile, "Reporting profile");
  engine_cmd->add_option("--collector", engine_opt.collector, "Collection server base URL");
  engine_cmd->add_option("--location", engine_opt.location, "Country code the geo lookup returns");
  engine_cmd->add_option("--delay-min", engine_opt.delay_min, "Minimum report delay (s)");
  engine_cmd->add_option("--delay-max", engine_opt.delay_max, "Maximum report delay (s)");
  engine_cmd->add_option("--seed", engine_opt.seed, "Queue RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cmd::input_error;
  }

  const OutputFormat fmt = parse_output_format(output);
  if (*replay) {
    replay_opt.output = fmt;
    return cmd::replay(replay_opt, std::cout, std::cerr);
  }
  if (*prices) {
    prices_opt.output = fmt;
    return cmd::analyze_prices(prices_opt, std::cout, std::cerr);
  }
  if (*anon) {
    anon_opt.output = fmt;
    return cmd::analyze_anonymity(anon_opt, std::cout, std::cerr);
  }
  if (*train) return cmd::train(train_opt, std::cout, std::cerr);
  if (*serve_cmd) return serve(serve_opt);
  if (*export_cmd) return cmd::export_model(export_opt, std::cout, std::cerr);
  if (*har) return cmd::import_har(har_in, har_out, std::cout, std::cerr);
  if (*engine_cmd) {
    if (engine_opt.delay_min < 0 || engine_opt.delay_max < engine_opt.delay_min) {
      std::cerr << "error: need 0 <= --delay-min <= --delay-max\n";
      return cmd::input_error;
    }
    return engine(engine_opt);
  }
  return cmd::internal_error;
}
