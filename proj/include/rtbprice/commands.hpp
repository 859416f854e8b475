#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtbprice/analytics.hpp"
#include "rtbprice/anonymity.hpp"
#include "rtbprice/error.hpp"
#include "rtbprice/event_json.hpp"
#include "rtbprice/pipeline.hpp"
#include "rtbprice/pricing/infer.hpp"
#include "rtbprice/pricing/model.hpp"
#include "rtbprice/pricing/train.hpp"
#include "rtbprice/profile.hpp"
#include "rtbprice/random.hpp"
#include "rtbprice/replay.hpp"
#include "rtbprice/transport/model_registry.hpp"

// Subcommand bodies. Machine-readable output goes to `out`, diagnostics to
// `err`; each returns the process exit code.
namespace rtbprice::cmd {

enum Exit : int { ok = 0, input_error = 1, internal_error = 2 };

#ifdef RTBPRICE_DATA_DIR
inline constexpr const char* kBuiltinDataDir = RTBPRICE_DATA_DIR;
#else
inline constexpr const char* kBuiltinDataDir = "data";
#endif

inline std::string default_data_dir() {
  if (const char* env = std::getenv("RTBPRICE_DATA")) return env;
  return kBuiltinDataDir;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw ParseError("cannot write " + path);
}

// Runs `body`, mapping exceptions onto exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return input_error;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return input_error;
  } catch (const VersionError& e) {
    err << "error: " << e.what() << '\n';
    return input_error;
  } catch (const LeakError& e) {
    err << "error: " << e.what() << '\n';
    return input_error;
  } catch (const InvariantError& e) {
    err << "error: " << e.what() << '\n';
    return input_error;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return internal_error;
  }
}

// A model for `profile`: the file at `path` when given and compatible,
// otherwise the bundled single-leaf default.
inline pricing::ForestModel load_model_or_default(const std::optional<std::string>& path,
                                                  const GranularityProfile& profile, std::ostream& err) {
  const auto schema = pricing::schema_for(profile);
  if (!path) return transport::bundled_default_model(schema);
  try {
    return pricing::deserialize_model(read_file(*path), schema.hash());
  } catch (const VersionError& e) {
    err << "warning: " << e.what() << "; using the rolling-average estimate\n";
    throw;
  }
}

// ---------------------------------------------------------------------------

struct ReplayOptions {
  std::string log;
  std::string data_dir = default_data_dir();
  std::optional<std::string> registry;
  std::optional<std::string> model;
  std::optional<std::string> profile;
  std::optional<std::string> location;  // fixed country code
  std::optional<std::string> geo_file;
  std::optional<std::string> events_out;
  OutputFormat output = OutputFormat::table;
};

inline int replay(const ReplayOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto data = ReferenceData::load(o.data_dir, o.registry);
    const auto profile = GranularityProfile::load(o.profile.value_or(o.data_dir + "/profiles/default.profile"));
    std::optional<pricing::ForestModel> model;
    try {
      model = load_model_or_default(o.model, profile, err);
    } catch (const VersionError&) {
      model.reset();
    }
    std::unique_ptr<GeoResolver> geo;
    if (o.geo_file) {
      geo = std::make_unique<StaticFileGeoResolver>(*o.geo_file);
    } else {
      geo = std::make_unique<FixedGeoResolver>(o.location);
    }
    Pipeline pipeline(data, profile, std::move(model), *geo, transport::default_model_price());
    const ReplayResult r = replay_file(o.log, pipeline);
    for (const auto& d : r.diagnostics) err << o.log << ": " << d << '\n';

    if (o.events_out) {
      std::ofstream ev(*o.events_out, std::ios::trunc);
      for (const auto& e : r.events) ev << event_to_json(e).dump() << '\n';
      if (!ev) throw ParseError("cannot write " + *o.events_out);
    }
    switch (o.output) {
      case OutputFormat::jsonl:
        for (const auto& e : r.events) out << event_to_json(e).dump() << '\n';
        break;
      case OutputFormat::csv:
        out << "requests,events,cleartext,inferred,total_usd,session_usd\n"
            << r.requests << ',' << r.events.size() << ',' << r.totals.cleartext << ',' << r.totals.inferred << ','
            << r.totals.all_time.to_string() << ',' << r.totals.session.to_string() << '\n';
        break;
      case OutputFormat::table:
        out << "requests    " << r.requests << '\n'
            << "events      " << r.events.size() << " (" << r.totals.cleartext << " cleartext, " << r.totals.inferred
            << " inferred)\n"
            << "total usd   " << r.totals.all_time.to_string() << '\n'
            << "session usd " << r.totals.session.to_string() << '\n';
        break;
    }
    return ok;
  });
}

// ---------------------------------------------------------------------------

struct AnalyzePricesOptions {
  std::string events;
  std::string by;
  bool cdf = false;
  OutputFormat output = OutputFormat::table;
};

inline int analyze_prices(const AnalyzePricesOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const GroupKey key = parse_group_key(o.by);
    const EventFile f = read_events_file(o.events);
    for (const auto& d : f.diagnostics) err << o.events << ": " << d << '\n';
    std::vector<AdEvent> events;
    for (const auto& le : f.events) events.push_back(le.event);
    write_table(out, rtbprice::analyze_prices(events, key), o.output, o.cdf);
    return ok;
  });
}

// ---------------------------------------------------------------------------

struct AnalyzeAnonymityOptions {
  std::vector<std::string> profiles;
  std::optional<std::string> events;
  std::vector<std::string> subset;
  OutputFormat output = OutputFormat::table;
};

struct ProfileAnonymity {
  std::string profile;
  std::size_t features = 0;
  double uniform_bits = 0;
  std::optional<std::vector<CdfPoint>> surprisal_cdf;
  std::size_t unbounded = 0;
  std::optional<AnonymityReport> k;
};

inline double cdf_quantile(const std::vector<CdfPoint>& cdf, double q) {
  for (const auto& p : cdf) {
    if (p.fraction + 1e-12 >= q) return p.value;
  }
  return cdf.empty() ? 0.0 : cdf.back().value;
}

inline std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline int analyze_anonymity(const AnalyzeAnonymityOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.profiles.empty()) throw ParseError("at least one --profile is required");
    std::vector<FeatureId> subset;
    for (const auto& s : o.subset) subset.push_back(feature_from_name_or_throw(s));

    std::vector<LabelledEvent> events;
    if (o.events) {
      EventFile f = read_events_file(*o.events);
      for (const auto& d : f.diagnostics) err << *o.events << ": " << d << '\n';
      events = std::move(f.events);
    }
    std::vector<AdEvent> plain;
    for (const auto& le : events) plain.push_back(le.event);

    std::vector<ProfileAnonymity> results;
    for (const auto& path : o.profiles) {
      const auto profile = GranularityProfile::load(path);
      ProfileAnonymity r;
      r.profile = profile.name();
      r.features = profile.size();
      r.uniform_bits = surprisal_uniform(profile).bits;
      if (!events.empty()) {
        const GranularityProfile mapped = profile.fully_mapped() ? profile : materialize(profile, plain);
        if (!profile.fully_mapped()) {
          err << "note: profile " << profile.name()
              << " declares counts only; empirical analysis uses the observed labels\n";
        }
        std::vector<AggregatedTuple> tuples;
        std::vector<UserTuple> users;
        for (const auto& le : events) {
          tuples.push_back(aggregate_event(le.event, mapped));
          if (!le.user.empty()) users.push_back({le.user, tuples.back()});
        }
        const auto dist = fit_distributions(tuples, mapped);
        std::vector<double> bits;
        for (const auto& t : tuples) {
          const auto s = surprisal_empirical(t, dist);
          if (s.unbounded()) {
            ++r.unbounded;
          } else {
            bits.push_back(s.bits);
          }
        }
        r.surprisal_cdf = empirical_cdf(std::move(bits));
        if (users.size() == tuples.size()) {
          r.k = k_anonymity_tuples(users, mapped, subset);
        } else if (!users.empty()) {
          err << "note: some events carry no `user`; k-anonymity skipped for " << profile.name() << '\n';
        }
      }
      results.push_back(std::move(r));
    }

    for (const auto& r : results) {
      switch (o.output) {
        case OutputFormat::jsonl: {
          nlohmann::json j;
          j["profile"] = r.profile;
          j["features"] = r.features;
          j["uniform_bits"] = r.uniform_bits;
          auto dump_cdf = [](const std::vector<CdfPoint>& cdf) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& p : cdf) a.push_back({p.value, p.fraction});
            return a;
          };
          if (r.surprisal_cdf) {
            j["surprisal_cdf"] = dump_cdf(*r.surprisal_cdf);
            j["unbounded"] = r.unbounded;
          }
          if (r.k) {
            j["k_cdf"] = dump_cdf(r.k->cdf);
            j["record_k_cdf"] = dump_cdf(r.k->record_cdf);
            j["min_k"] = r.k->min_k();
          }
          out << j.dump() << '\n';
          break;
        }
        case OutputFormat::csv:
          if (&r == &results.front()) out << "profile,features,uniform_bits,median_bits,p95_bits,min_k,median_k\n";
          out << csv_field(r.profile) << ',' << r.features << ',' << fixed(r.uniform_bits, 3) << ','
              << (r.surprisal_cdf ? fixed(cdf_quantile(*r.surprisal_cdf, 0.5), 3) : "") << ','
              << (r.surprisal_cdf ? fixed(cdf_quantile(*r.surprisal_cdf, 0.95), 3) : "") << ','
              << (r.k ? std::to_string(r.k->min_k()) : "") << ','
              << (r.k ? fixed(cdf_quantile(r.k->record_cdf, 0.5), 0) : "") << '\n';
          break;
        case OutputFormat::table:
          if (&r == &results.front()) {
            out << std::left << std::setw(16) << "profile" << std::right << std::setw(9) << "features"
                << std::setw(14) << "uniform bits";
            if (o.events) out << std::setw(13) << "median bits" << std::setw(10) << "p95 bits" << std::setw(7)
                              << "min k" << std::setw(10) << "median k";
            out << '\n';
          }
          out << std::left << std::setw(16) << r.profile << std::right << std::setw(9) << r.features
              << std::setw(14) << fixed(r.uniform_bits, 1);
          if (o.events) {
            out << std::setw(13) << (r.surprisal_cdf ? fixed(cdf_quantile(*r.surprisal_cdf, 0.5), 2) : "-")
                << std::setw(10) << (r.surprisal_cdf ? fixed(cdf_quantile(*r.surprisal_cdf, 0.95), 2) : "-")
                << std::setw(7) << (r.k ? std::to_string(r.k->min_k()) : "-") << std::setw(10)
                << (r.k ? fixed(cdf_quantile(r.k->record_cdf, 0.5), 0) : "-");
          }
          out << '\n';
          break;
      }
    }
    return ok;
  });
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string events;
  std::string data_dir = default_data_dir();
  std::optional<std::string> profile;
  std::string model_out;
  std::uint64_t seed = 1;
  int trees = 50;
  int max_depth = 16;
  double holdout = 0.2;
  std::int64_t version = 2;
  std::int64_t trained_at = 0;
};

inline int train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.holdout < 0 || o.holdout >= 1) throw ParseError("--holdout must be in [0, 1)");
    const auto profile = GranularityProfile::load(o.profile.value_or(o.data_dir + "/profiles/default.profile"));
    const EventFile f = read_events_file(o.events);
    for (const auto& d : f.diagnostics) err << o.events << ": " << d << '\n';
    std::vector<AdEvent> events;
    for (const auto& le : f.events) {
      if (le.event.price_kind == PriceSource::cleartext) events.push_back(le.event);
    }
    if (events.empty()) throw ParseError("no cleartext-priced events to train on");

    Rng rng(o.seed);
    fisher_yates(events, rng);
    const auto n_test = static_cast<std::size_t>(static_cast<double>(events.size()) * o.holdout);
    std::vector<AdEvent> test(events.begin(), events.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<AdEvent> training(events.begin() + static_cast<std::ptrdiff_t>(n_test), events.end());
    if (training.empty()) throw ParseError("hold-out leaves no training events");

    pricing::TrainOptions topt;
    topt.forest_size = o.trees;
    topt.seed = o.seed;
    topt.max_depth = o.max_depth;
    topt.version = o.version;
    topt.trained_at = o.trained_at;
    const auto trained = pricing::train_model(training, profile, topt);
    write_file(o.model_out, pricing::serialize_model(trained.forest));

    nlohmann::json j;
    j["model"] = o.model_out;
    j["training_events"] = training.size();
    j["held_out_events"] = test.size();
    j["trees"] = trained.forest.trees.size();
    j["class_boundaries_usd"] = nlohmann::json::array();
    for (const auto& b : trained.scheme.boundaries) j["class_boundaries_usd"].push_back(b.to_string());
    if (!test.empty()) {
      const auto ev = pricing::evaluate_model(trained.forest, profile, trained.scheme, test);
      for (const auto& d : ev.diagnostics) err << "evaluation: " << d << '\n';
      j["auc_roc"] = ev.auc_roc;
      j["f1"] = ev.f1;
    }
    out << j.dump() << '\n';
    return ok;
  });
}

// ---------------------------------------------------------------------------

struct ExportModelOptions {
  std::optional<std::string> model;  // absent: bundled default
  std::string data_dir = default_data_dir();
  std::optional<std::string> profile;
  std::optional<std::string> output;  // absent: stdout
};

// Writes the canonical form of a model (or the bundled default).
inline int export_model(const ExportModelOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::string doc;
    if (o.model) {
      doc = pricing::serialize_model(pricing::deserialize_model(read_file(*o.model)));
    } else {
      const auto profile = GranularityProfile::load(o.profile.value_or(o.data_dir + "/profiles/default.profile"));
      doc = pricing::serialize_model(transport::bundled_default_model(pricing::schema_for(profile)));
    }
    if (o.output) {
      write_file(*o.output, doc + "\n");
    } else {
      out << doc << '\n';
    }
    return ok;
  });
}

// ---------------------------------------------------------------------------

inline int import_har(const std::string& har, const std::optional<std::string>& output, std::ostream& out,
                      std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(har);
    if (!in) throw ParseError("cannot open " + har);
    const HarImport r = rtbprice::import_har(in);
    for (const auto& d : r.diagnostics) err << har << ": " << d << '\n';
    std::ostringstream body;
    for (const auto& l : r.lines) body << l << '\n';
    if (output) {
      write_file(*output, body.str());
    } else {
      out << body.str();
    }
    return ok;
  });
}

}  // namespace rtbprice::cmd
