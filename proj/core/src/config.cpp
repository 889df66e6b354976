#include "hetqfl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace hetqfl::cli {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw config_error(path.empty() ? message : path + ": " + message);
}

void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& allowed) {
  for (const auto& item : obj.items())
    if (!allowed.count(item.key()))
      fail(path, "unknown key '" + item.key() + "'");
}

double get_number(const json& obj, const std::string& path,
                  const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) fail(path + "." + key, "expected a number");
  return obj[key].get<double>();
}

int get_int(const json& obj, const std::string& path, const std::string& key,
            int fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) fail(path + "." + key, "expected an integer");
  return obj[key].get<int>();
}

bool get_bool(const json& obj, const std::string& path, const std::string& key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) fail(path + "." + key, "expected a boolean");
  return obj[key].get<bool>();
}

std::string get_string(const json& obj, const std::string& path,
                       const std::string& key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) fail(path + "." + key, "expected a string");
  return obj[key].get<std::string>();
}

std::string require_string(const json& obj, const std::string& path,
                           const std::string& key) {
  if (!obj.contains(key)) fail(path, "missing required key '" + key + "'");
  if (!obj[key].is_string()) fail(path + "." + key, "expected a string");
  return obj[key].get<std::string>();
}

// Scalar, array of length n, or {"round_robin": [...]} resolved to a
// per-client vector via the element parser f(json, path) -> T.
template <typename T, typename F>
std::vector<T> resolve_per_client(const json& value, const std::string& path,
                                  int n, F&& parse_one) {
  std::vector<T> out;
  if (value.is_array()) {
    if (static_cast<int>(value.size()) != n)
      fail(path, "array must have one entry per client (" +
                     std::to_string(n) + ")");
    for (int i = 0; i < n; ++i)
      out.push_back(parse_one(value[static_cast<std::size_t>(i)],
                              path + "[" + std::to_string(i) + "]"));
    return out;
  }
  if (value.is_object() && value.contains("round_robin")) {
    check_keys(value, path, {"round_robin"});
    const json& cycle = value["round_robin"];
    if (!cycle.is_array() || cycle.empty())
      fail(path + ".round_robin", "expected a nonempty array");
    for (int i = 0; i < n; ++i) {
      const auto& element = cycle[static_cast<std::size_t>(i) % cycle.size()];
      out.push_back(parse_one(element, path + ".round_robin[" +
                                           std::to_string(i % cycle.size()) +
                                           "]"));
    }
    return out;
  }
  const T scalar = parse_one(value, path);
  out.assign(static_cast<std::size_t>(n), scalar);
  return out;
}

int parse_positive_int(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<int>() < 1)
    fail(path, "expected a positive integer");
  return v.get<int>();
}

double parse_phi(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double x = v.get<double>();
  if (!(x > 0.0 && x <= 1.0)) fail(path, "phi must be in (0, 1]");
  return x;
}

double parse_sigma(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double x = v.get<double>();
  if (!(x >= 0.0)) fail(path, "sigma_sq must be >= 0");
  return x;
}

qsim::NoiseConfig parse_noise(const json& v, const std::string& path) {
  if (!v.is_object()) fail(path, "expected a noise object");
  check_keys(v, path,
             {"enabled", "gamma_ad", "p_pd", "t1_us", "t2_us",
              "gate_time_1q_ns", "gate_time_2q_ns"});
  qsim::NoiseConfig n;
  n.enabled = get_bool(v, path, "enabled", true);
  n.gamma_ad = get_number(v, path, "gamma_ad", n.gamma_ad);
  n.p_pd = get_number(v, path, "p_pd", n.p_pd);
  n.t1_us = get_number(v, path, "t1_us", n.t1_us);
  n.t2_us = get_number(v, path, "t2_us", n.t2_us);
  n.gate_time_1q_ns = get_number(v, path, "gate_time_1q_ns", n.gate_time_1q_ns);
  n.gate_time_2q_ns = get_number(v, path, "gate_time_2q_ns", n.gate_time_2q_ns);
  try {
    n.validate();
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
  return n;
}

fed::DataSpec parse_dataset(const json& root) {
  fed::DataSpec ds;
  if (!root.contains("dataset")) return ds;
  const json& j = root["dataset"];
  if (!j.is_object()) fail("dataset", "expected an object");
  check_keys(j, "dataset",
             {"kind", "n", "classes", "dim", "spread", "images", "labels",
              "path", "reduce", "subsample"});
  const std::string kind = get_string(j, "dataset", "kind", "blobs");
  if (kind == "blobs") {
    ds.source = fed::DataSpec::Source::blobs;
    ds.blob_n = get_int(j, "dataset", "n", ds.blob_n);
    ds.blob_classes = get_int(j, "dataset", "classes", ds.blob_classes);
    ds.blob_dim = get_int(j, "dataset", "dim", ds.blob_dim);
    ds.blob_spread = get_number(j, "dataset", "spread", ds.blob_spread);
  } else if (kind == "idx") {
    ds.source = fed::DataSpec::Source::idx;
    ds.images_path = require_string(j, "dataset", "images");
    ds.labels_path = require_string(j, "dataset", "labels");
  } else if (kind == "csv") {
    ds.source = fed::DataSpec::Source::csv;
    ds.csv_path = require_string(j, "dataset", "path");
  } else {
    fail("dataset.kind", "expected blobs, idx, or csv");
  }
  ds.subsample = get_int(j, "dataset", "subsample", 0);
  if (j.contains("reduce")) {
    const json& r = j["reduce"];
    if (!r.is_object()) fail("dataset.reduce", "expected an object");
    check_keys(r, "dataset.reduce", {"method", "dim"});
    const std::string method = get_string(r, "dataset.reduce", "method", "avgpool");
    if (method == "avgpool") {
      ds.reduce_method = data::ReduceMethod::avgpool;
    } else if (method == "pca") {
      ds.reduce_method = data::ReduceMethod::pca;
    } else {
      fail("dataset.reduce.method", "expected avgpool or pca");
    }
    ds.reduce_dim = get_int(r, "dataset.reduce", "dim", 0);
    if (ds.reduce_dim < 1) fail("dataset.reduce.dim", "expected a positive integer");
  }
  return ds;
}

void parse_clients(const json& root, fed::ExperimentSpec& spec) {
  spec.num_clients = 8;
  spec.classes_per_client = 2;
  std::vector<int> qubits, layers;
  std::vector<double> phi, sigma;
  std::vector<qsim::NoiseConfig> noise;

  const json clients = root.contains("clients") ? root["clients"] : json::object();
  if (!clients.is_object()) fail("clients", "expected an object");
  check_keys(clients, "clients",
             {"count", "classes_per_client", "qubits", "layers", "phi",
              "sigma_sq", "noise"});
  spec.num_clients = get_int(clients, "clients", "count", spec.num_clients);
  if (spec.num_clients < 1) fail("clients.count", "expected a positive integer");
  spec.classes_per_client =
      get_int(clients, "clients", "classes_per_client", spec.classes_per_client);
  const int n = spec.num_clients;

  qubits = clients.contains("qubits")
               ? resolve_per_client<int>(clients["qubits"], "clients.qubits", n,
                                         parse_positive_int)
               : std::vector<int>(static_cast<std::size_t>(n), 4);
  layers = clients.contains("layers")
               ? resolve_per_client<int>(clients["layers"], "clients.layers", n,
                                         parse_positive_int)
               : std::vector<int>(static_cast<std::size_t>(n), 1);
  phi = clients.contains("phi")
            ? resolve_per_client<double>(clients["phi"], "clients.phi", n,
                                         parse_phi)
            : std::vector<double>(static_cast<std::size_t>(n), 1.0);
  sigma = clients.contains("sigma_sq")
              ? resolve_per_client<double>(clients["sigma_sq"],
                                           "clients.sigma_sq", n, parse_sigma)
              : std::vector<double>(static_cast<std::size_t>(n), 0.0);
  noise = clients.contains("noise")
              ? resolve_per_client<qsim::NoiseConfig>(
                    clients["noise"], "clients.noise", n, parse_noise)
              : std::vector<qsim::NoiseConfig>(static_cast<std::size_t>(n));

  spec.clients.clear();
  for (int i = 0; i < n; ++i) {
    fed::ClientProfile c;
    c.id = i;
    c.num_qubits = qubits[static_cast<std::size_t>(i)];
    c.num_layers = layers[static_cast<std::size_t>(i)];
    c.phi = phi[static_cast<std::size_t>(i)];
    c.sigma_sq = sigma[static_cast<std::size_t>(i)];
    c.noise = noise[static_cast<std::size_t>(i)];
    spec.clients.push_back(c);
  }
}

void parse_training(const json& root, fed::Hyper& hyper) {
  // Runs even when the section is missing so the adam default applies.
  const json j = root.contains("training") ? root["training"] : json::object();
  if (!j.is_object()) fail("training", "expected an object");
  check_keys(j, "training",
             {"optimizer", "eta", "batch_size", "local_steps", "rounds",
              "lambda", "gamma_ns", "shots"});
  const std::string opt = get_string(j, "training", "optimizer", "adam");
  if (opt == "sgd") {
    hyper.optimizer = fed::OptimizerKind::sgd;
  } else if (opt == "adam") {
    hyper.optimizer = fed::OptimizerKind::adam;
  } else {
    fail("training.optimizer", "expected sgd or adam");
  }
  hyper.eta = get_number(j, "training", "eta", hyper.eta);
  hyper.batch_size = get_int(j, "training", "batch_size", hyper.batch_size);
  hyper.local_steps = get_int(j, "training", "local_steps", hyper.local_steps);
  hyper.rounds = get_int(j, "training", "rounds", hyper.rounds);
  hyper.lambda = get_number(j, "training", "lambda", hyper.lambda);
  hyper.gamma_ns = get_number(j, "training", "gamma_ns", hyper.gamma_ns);
  hyper.shots = get_int(j, "training", "shots", hyper.shots);
}

void parse_aggregation(const json& root, fed::Hyper& hyper) {
  if (!root.contains("aggregation")) return;
  const json& j = root["aggregation"];
  if (!j.is_object()) fail("aggregation", "expected an object");
  check_keys(j, "aggregation", {"strategy", "alpha", "tau"});
  if (j.contains("strategy")) {
    hyper.strategy =
        fed::strategy_from_name(require_string(j, "aggregation", "strategy"));
    hyper.strategy_explicit = true;
  }
  hyper.alpha = get_number(j, "aggregation", "alpha", hyper.alpha);
  if (j.contains("tau")) {
    const json& t = j["tau"];
    if (t.is_string()) {
      const auto s = t.get<std::string>();
      if (s == "adaptive") {
        hyper.tau.mode = fed::TauPolicy::Mode::adaptive;
      } else if (s == "disabled") {
        hyper.tau.mode = fed::TauPolicy::Mode::disabled;
      } else {
        fail("aggregation.tau", "expected adaptive, disabled, or a number");
      }
    } else if (t.is_number()) {
      hyper.tau.mode = fed::TauPolicy::Mode::fixed;
      hyper.tau.fixed_value = t.get<double>();
    } else {
      fail("aggregation.tau", "expected adaptive, disabled, or a number");
    }
  }
}

void parse_encoding(const json& root, fed::ExperimentSpec& spec) {
  if (!root.contains("encoding")) return;
  const json& j = root["encoding"];
  if (!j.is_object()) fail("encoding", "expected an object");
  check_keys(j, "encoding", {"kind", "normalization"});
  const std::string kind = get_string(j, "encoding", "kind", "amplitude");
  if (kind == "amplitude") {
    spec.encoder = encode::EncoderKind::amplitude;
  } else if (kind == "angle") {
    spec.encoder = encode::EncoderKind::angle;
  } else if (kind == "basis") {
    spec.encoder = encode::EncoderKind::basis;
  } else {
    fail("encoding.kind", "expected amplitude, angle, or basis");
  }
  const std::string norm = get_string(j, "encoding", "normalization", "l2");
  if (norm == "l2") {
    spec.normalization = encode::Normalization::l2;
  } else if (norm == "zscore_then_l2") {
    spec.normalization = encode::Normalization::zscore_then_l2;
  } else {
    fail("encoding.normalization", "expected l2 or zscore_then_l2");
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw config_error("config root must be an object");
  check_keys(root, "",
             {"dataset", "clients", "encoding", "training", "aggregation",
              "algorithms", "seeds", "train_fraction", "output"});

  ExperimentConfig config;
  auto& spec = config.spec;
  spec.dataset = parse_dataset(root);
  parse_clients(root, spec);
  parse_encoding(root, spec);
  parse_training(root, spec.hyper);
  parse_aggregation(root, spec.hyper);

  spec.train_fraction =
      get_number(root, "", "train_fraction", spec.train_fraction);

  if (root.contains("seeds")) {
    const json& s = root["seeds"];
    spec.seeds.clear();
    if (s.is_number_integer()) {
      spec.seeds.push_back(s.get<std::uint64_t>());
    } else if (s.is_array() && !s.empty()) {
      for (const auto& v : s) {
        if (!v.is_number_integer()) fail("seeds", "expected integers");
        spec.seeds.push_back(v.get<std::uint64_t>());
      }
    } else {
      fail("seeds", "expected an integer or a nonempty array of integers");
    }
  }

  if (root.contains("algorithms")) {
    const json& a = root["algorithms"];
    config.algorithms.clear();
    if (a.is_string()) {
      config.algorithms.push_back(fed::algorithm_from_name(a.get<std::string>()));
    } else if (a.is_array() && !a.empty()) {
      for (const auto& v : a) {
        if (!v.is_string()) fail("algorithms", "expected algorithm names");
        config.algorithms.push_back(
            fed::algorithm_from_name(v.get<std::string>()));
      }
    } else {
      fail("algorithms", "expected a name or a nonempty array of names");
    }
    for (std::size_t i = 0; i < config.algorithms.size(); ++i)
      for (std::size_t j = i + 1; j < config.algorithms.size(); ++j)
        if (config.algorithms[i] == config.algorithms[j])
          fail("algorithms", "duplicate algorithm '" +
                                 fed::algorithm_name(config.algorithms[i]) +
                                 "'");
  }

  if (root.contains("output")) {
    const json& o = root["output"];
    if (!o.is_object()) fail("output", "expected an object");
    check_keys(o, "output", {"dir", "save_models", "quiet"});
    config.output_dir = get_string(o, "output", "dir", config.output_dir);
    config.save_models = get_bool(o, "output", "save_models", config.save_models);
    config.quiet = get_bool(o, "output", "quiet", config.quiet);
  }

  try {
    spec.validate();
  } catch (const config_error&) {
    throw;
  } catch (const std::exception& e) {
    throw config_error(e.what());
  }
  return config;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

namespace {

json noise_to_json(const qsim::NoiseConfig& n) {
  return json{{"enabled", n.enabled},
              {"gamma_ad", n.gamma_ad},
              {"p_pd", n.p_pd},
              {"t1_us", n.t1_us},
              {"t2_us", n.t2_us},
              {"gate_time_1q_ns", n.gate_time_1q_ns},
              {"gate_time_2q_ns", n.gate_time_2q_ns}};
}

}  // namespace

std::string effective_config_text(const ExperimentConfig& config) {
  const auto& spec = config.spec;
  json root;

  json dataset;
  switch (spec.dataset.source) {
    case fed::DataSpec::Source::blobs:
      dataset = json{{"kind", "blobs"},
                     {"n", spec.dataset.blob_n},
                     {"classes", spec.dataset.blob_classes},
                     {"dim", spec.dataset.blob_dim},
                     {"spread", spec.dataset.blob_spread}};
      break;
    case fed::DataSpec::Source::idx:
      dataset = json{{"kind", "idx"},
                     {"images", spec.dataset.images_path},
                     {"labels", spec.dataset.labels_path}};
      break;
    case fed::DataSpec::Source::csv:
      dataset = json{{"kind", "csv"}, {"path", spec.dataset.csv_path}};
      break;
  }
  if (spec.dataset.subsample > 0) dataset["subsample"] = spec.dataset.subsample;
  if (spec.dataset.reduce_dim > 0)
    dataset["reduce"] =
        json{{"method", spec.dataset.reduce_method == data::ReduceMethod::avgpool
                            ? "avgpool"
                            : "pca"},
             {"dim", spec.dataset.reduce_dim}};
  root["dataset"] = dataset;

  json qubits = json::array(), layers = json::array(), phi = json::array(),
       sigma = json::array(), noise = json::array();
  for (const auto& c : spec.clients) {
    qubits.push_back(c.num_qubits);
    layers.push_back(c.num_layers);
    phi.push_back(c.phi);
    sigma.push_back(c.sigma_sq);
    noise.push_back(noise_to_json(c.noise));
  }
  root["clients"] = json{{"count", spec.num_clients},
                         {"classes_per_client", spec.classes_per_client},
                         {"qubits", qubits},
                         {"layers", layers},
                         {"phi", phi},
                         {"sigma_sq", sigma},
                         {"noise", noise}};

  root["encoding"] =
      json{{"kind", spec.encoder == encode::EncoderKind::amplitude ? "amplitude"
                    : spec.encoder == encode::EncoderKind::angle  ? "angle"
                                                                  : "basis"},
           {"normalization",
            spec.normalization == encode::Normalization::l2 ? "l2"
                                                            : "zscore_then_l2"}};

  root["training"] =
      json{{"optimizer",
            spec.hyper.optimizer == fed::OptimizerKind::sgd ? "sgd" : "adam"},
           {"eta", spec.hyper.eta},
           {"batch_size", spec.hyper.batch_size},
           {"local_steps", spec.hyper.local_steps},
           {"rounds", spec.hyper.rounds},
           {"lambda", spec.hyper.lambda},
           {"gamma_ns", spec.hyper.gamma_ns},
           {"shots", spec.hyper.shots}};

  json aggregation;
  if (spec.hyper.strategy_explicit)
    aggregation["strategy"] = fed::strategy_name(spec.hyper.strategy);
  aggregation["alpha"] = spec.hyper.alpha;
  switch (spec.hyper.tau.mode) {
    case fed::TauPolicy::Mode::adaptive:
      aggregation["tau"] = "adaptive";
      break;
    case fed::TauPolicy::Mode::disabled:
      aggregation["tau"] = "disabled";
      break;
    case fed::TauPolicy::Mode::fixed:
      aggregation["tau"] = spec.hyper.tau.fixed_value;
      break;
  }
  root["aggregation"] = aggregation;

  json algorithms = json::array();
  for (const auto a : config.algorithms)
    algorithms.push_back(fed::algorithm_name(a));
  root["algorithms"] = algorithms;
  root["seeds"] = spec.seeds;
  root["train_fraction"] = spec.train_fraction;
  root["output"] = json{{"dir", config.output_dir},
                        {"save_models", config.save_models},
                        {"quiet", config.quiet}};
  return root.dump(2) + "\n";
}

}  // namespace hetqfl::cli
