// Copyright 2026 The qmeta Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qmeta/policy.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>

#include "qmeta/error.hpp"
#include "qmeta/io.hpp"
#include "qmeta/random.hpp"

namespace qmeta {

GateKind parse_gate_kind(std::string_view name) {
  if (name == "x-gate") return GateKind::kXGate;
  if (name == "cz") return GateKind::kCz;
  if (name == "cz-tunable") return GateKind::kCzTunable;
  throw ConfigError("unknown gate kind '" + std::string(name) + "' (expected x-gate, cz, cz-tunable)");
}

std::string to_string(GateKind kind) {
  switch (kind) {
    case GateKind::kXGate: return "x-gate";
    case GateKind::kCz: return "cz";
    case GateKind::kCzTunable: return "cz-tunable";
  }
  throw ConfigError("unknown gate kind");
}

// ---------------------------------------------------------------------------
// Architecture

namespace {

std::vector<int> layer_dims(const PolicyArch& a) {
  std::vector<int> dims{a.feature_dim};
  for (int l = 0; l < a.hidden_layers; ++l) dims.push_back(a.hidden_dim);
  dims.push_back(a.output_dim());
  return dims;
}

struct Tape {
  std::vector<RealVector> acts;  // input, then each hidden activation
  RealVector out_tanh;
};

Tape run(const PolicyParams& p, const RealVector& features) {
  p.validate();
  if (features.size() != p.arch.feature_dim)
    throw ShapeError("feature vector has length " + std::to_string(features.size()) + ", policy expects " +
                     std::to_string(p.arch.feature_dim));
  if (!features.allFinite()) throw NumericError("non-finite task features");
  const auto dims = layer_dims(p.arch);
  Tape t;
  t.acts.push_back(features);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Eigen::Index in = dims[l], out = dims[l + 1];
    Eigen::Map<const RealMatrix> w(p.theta.data() + off, out, in);
    off += in * out;
    Eigen::Map<const RealVector> b(p.theta.data() + off, out);
    off += out;
    RealVector z = w * t.acts.back() + b;
    if (l + 2 < dims.size())
      t.acts.push_back(z.array().tanh().matrix());
    else
      t.out_tanh = z.array().tanh().matrix();
  }
  return t;
}

}  // namespace

std::size_t PolicyArch::param_count() const {
  const auto dims = layer_dims(*this);
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    n += static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l + 1]) +
         static_cast<std::size_t>(dims[l + 1]);
  return n;
}

void PolicyArch::validate() const {
  if (feature_dim <= 0 || hidden_dim <= 0 || hidden_layers <= 0 || n_segments <= 0 || n_controls <= 0)
    throw ConfigError("policy dimensions must be positive");
  if (!(output_scale > 0.0) || !std::isfinite(output_scale))
    throw ConfigError("policy output_scale must be positive and finite");
}

void PolicyParams::validate() const {
  arch.validate();
  if (static_cast<std::size_t>(theta.size()) != arch.param_count())
    throw ShapeError("policy parameter vector has length " + std::to_string(theta.size()) +
                     ", architecture needs " + std::to_string(arch.param_count()));
  if (!theta.allFinite()) throw NumericError("non-finite policy parameters");
}

// ---------------------------------------------------------------------------
// Features

int feature_dim(GateKind gate) {
  switch (gate) {
    case GateKind::kXGate: return 3;
    case GateKind::kCz: return 4;
    case GateKind::kCzTunable: return 1;
  }
  throw ConfigError("unknown gate kind");
}

RealVector task_features(const TaskParams& xi, GateKind gate) {
  switch (gate) {
    case GateKind::kXGate: {
      if (xi.kind != TaskParams::Kind::kNoiseRates || xi.size() != 2)
        throw ConfigError("x-gate features need 2 noise rates");
      RealVector f(3);
      f << xi[0] / 0.1, xi[1] / 0.05, (xi[0] + xi[1]) / 0.15;
      return f;
    }
    case GateKind::kCz: {
      if (xi.kind != TaskParams::Kind::kNoiseRates || xi.size() != 4)
        throw ConfigError("cz features need 4 noise rates");
      RealVector f(4);
      f << xi[0] / 0.1, xi[1] / 0.05, xi[2] / 0.1, xi[3] / 0.05;
      return f;
    }
    case GateKind::kCzTunable: {
      if (xi.kind != TaskParams::Kind::kCoupling || xi.size() != 1)
        throw ConfigError("cz-tunable features need one coupling");
      RealVector f(1);
      f << xi[0] / 9.0;
      return f;
    }
  }
  throw ConfigError("unknown gate kind");
}

// ---------------------------------------------------------------------------
// Forward / backward

RealMatrix forward_amplitudes(const PolicyParams& params, const RealVector& features) {
  const Tape t = run(params, features);
  RealMatrix amps(params.arch.n_segments, params.arch.n_controls);
  for (int s = 0; s < params.arch.n_segments; ++s)
    for (int k = 0; k < params.arch.n_controls; ++k)
      amps(s, k) = params.arch.output_scale * t.out_tanh(s * params.arch.n_controls + k);
  return amps;
}

ControlSchedule forward(const PolicyParams& params, const RealVector& features, double horizon,
                        double amp_max) {
  if (params.arch.output_scale > amp_max)
    throw ConfigError("policy output_scale exceeds schedule amp_max");
  ControlSchedule s;
  s.horizon = horizon;
  s.amp_max = amp_max;
  s.amplitudes = forward_amplitudes(params, features);
  return s;
}

RealVector policy_vjp(const PolicyParams& params, const RealVector& features,
                      const RealMatrix& amp_grad) {
  const PolicyArch& a = params.arch;
  if (amp_grad.rows() != a.n_segments || amp_grad.cols() != a.n_controls)
    throw ShapeError("amplitude gradient shape does not match policy output");
  const Tape t = run(params, features);
  const auto dims = layer_dims(a);
  const std::size_t n_layers = dims.size() - 1;

  std::vector<Eigen::Index> offsets(n_layers);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += static_cast<Eigen::Index>(dims[l]) * dims[l + 1] + dims[l + 1];
  }

  RealVector dz(a.output_dim());
  for (int s = 0; s < a.n_segments; ++s)
    for (int k = 0; k < a.n_controls; ++k) {
      const Eigen::Index i = s * a.n_controls + k;
      dz(i) = amp_grad(s, k) * a.output_scale * (1.0 - t.out_tanh(i) * t.out_tanh(i));
    }

  RealVector grad(params.theta.size());
  for (std::size_t l = n_layers; l-- > 0;) {
    const Eigen::Index in = dims[l], out = dims[l + 1];
    Eigen::Map<RealMatrix> gw(grad.data() + offsets[l], out, in);
    Eigen::Map<RealVector> gb(grad.data() + offsets[l] + in * out, out);
    gw.noalias() = dz * t.acts[l].transpose();
    gb = dz;
    if (l == 0) break;
    Eigen::Map<const RealMatrix> w(params.theta.data() + offsets[l], out, in);
    RealVector da = w.transpose() * dz;
    dz = da.array() * (1.0 - t.acts[l].array().square());
  }
  return grad;
}

PolicyParams init_params(std::uint64_t seed, const PolicyArch& arch) {
  arch.validate();
  PolicyParams p;
  p.arch = arch;
  p.theta.resize(static_cast<Eigen::Index>(arch.param_count()));
  Rng rng(stream_seed(seed, {0x706f6c696379ULL}));
  const auto dims = layer_dims(arch);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    const Eigen::Index n = static_cast<Eigen::Index>(dims[l]) * dims[l + 1] + dims[l + 1];
    for (Eigen::Index i = 0; i < n; ++i) p.theta(off + i) = rng.uniform(-bound, bound);
    off += n;
  }
  return p;
}

PolicyScheduleMap::PolicyScheduleMap(PolicyArch arch, RealVector features, double horizon,
                                     double amp_max)
    : arch_(arch), features_(std::move(features)), horizon_(horizon), amp_max_(amp_max) {
  arch_.validate();
  if (features_.size() != arch_.feature_dim) throw ShapeError("feature length does not match policy");
  if (arch_.output_scale > amp_max_) throw ConfigError("policy output_scale exceeds schedule amp_max");
}

std::size_t PolicyScheduleMap::param_count() const { return arch_.param_count(); }

ControlSchedule PolicyScheduleMap::forward(const RealVector& theta) const {
  return qmeta::forward(PolicyParams{arch_, theta}, features_, horizon_, amp_max_);
}

RealVector PolicyScheduleMap::pullback(const RealVector& theta, const RealMatrix& schedule_grad) const {
  return policy_vjp(PolicyParams{arch_, theta}, features_, schedule_grad);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kMagic = "qmeta-checkpoint";
constexpr std::string_view kSeparator = "---\n";

void append_le(std::string& out, const RealVector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v(i));
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
}

RealVector read_le(std::string_view data, std::size_t& pos, std::size_t count) {
  if (pos + 8 * count > data.size()) throw FormatError("checkpoint payload truncated");
  RealVector v(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + 8 * i + b])) << (8 * b);
    v(static_cast<Eigen::Index>(i)) = std::bit_cast<double>(bits);
  }
  pos += 8 * count;
  return v;
}

void check_token(std::string_view s, bool is_key) {
  if (s.empty() && is_key) throw ConfigError("checkpoint metadata key is empty");
  for (char c : s)
    if (c == '\n' || c == '\r' || (is_key && (c == '=' || c == ' ')))
      throw ConfigError("checkpoint metadata contains a forbidden character: '" + std::string(s) + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size())
    throw FormatError("checkpoint field " + key + " has invalid value '" + value + "'");
  return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.params.validate();
  std::string payload;
  append_le(payload, ckpt.params.theta);
  for (const auto& [name, v] : ckpt.sections) {
    check_token(name, true);
    append_le(payload, v);
  }
  const PolicyArch& a = ckpt.params.arch;
  std::ostringstream h;
  h << kMagic << '\n';
  h << "version=" << kCheckpointVersion << '\n';
  h << "arch.feature_dim=" << a.feature_dim << '\n';
  h << "arch.hidden_dim=" << a.hidden_dim << '\n';
  h << "arch.hidden_layers=" << a.hidden_layers << '\n';
  h << "arch.n_segments=" << a.n_segments << '\n';
  h << "arch.n_controls=" << a.n_controls << '\n';
  h << "arch.output_scale=" << io::format_double(a.output_scale) << '\n';
  h << "seed=" << ckpt.seed << '\n';
  for (const auto& [k, v] : ckpt.metadata) {
    check_token(k, true);
    check_token(v, false);
    h << "meta." << k << '=' << v << '\n';
  }
  h << "payload.params=" << ckpt.params.theta.size() << '\n';
  for (const auto& [name, v] : ckpt.sections) h << "payload.section." << name << '=' << v.size() << '\n';
  h << "payload.sha256=" << io::sha256_hex(payload) << '\n';
  h << kSeparator;
  return h.str() + payload;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const std::size_t sep = bytes.find("\n---\n");
  if (bytes.compare(0, kMagic.size() + 1, std::string(kMagic) + "\n") != 0 || sep == std::string::npos)
    throw FormatError("not a qmeta checkpoint");
  std::istringstream header(bytes.substr(kMagic.size() + 1, sep - kMagic.size()));
  std::string_view payload(bytes.data() + sep + 5, bytes.size() - sep - 5);

  Checkpoint c;
  std::vector<std::pair<std::string, std::size_t>> order;
  std::size_t n_params = 0;
  bool have_params = false, have_version = false;
  std::string checksum;
  std::string line;
  while (std::getline(header, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed checkpoint header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "version") {
      const int v = parse_number<int>(key, value);
      if (v != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + value + " (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")");
      have_version = true;
    } else if (key == "arch.feature_dim") {
      c.params.arch.feature_dim = parse_number<int>(key, value);
    } else if (key == "arch.hidden_dim") {
      c.params.arch.hidden_dim = parse_number<int>(key, value);
    } else if (key == "arch.hidden_layers") {
      c.params.arch.hidden_layers = parse_number<int>(key, value);
    } else if (key == "arch.n_segments") {
      c.params.arch.n_segments = parse_number<int>(key, value);
    } else if (key == "arch.n_controls") {
      c.params.arch.n_controls = parse_number<int>(key, value);
    } else if (key == "arch.output_scale") {
      c.params.arch.output_scale = parse_number<double>(key, value);
    } else if (key == "seed") {
      c.seed = parse_number<std::uint64_t>(key, value);
    } else if (key.rfind("meta.", 0) == 0) {
      c.metadata[key.substr(5)] = value;
    } else if (key == "payload.params") {
      n_params = parse_number<std::size_t>(key, value);
      have_params = true;
    } else if (key.rfind("payload.section.", 0) == 0) {
      order.emplace_back(key.substr(16), parse_number<std::size_t>(key, value));
    } else if (key == "payload.sha256") {
      checksum = value;
    } else {
      throw FormatError("unknown checkpoint header key '" + key + "'");
    }
  }
  if (!have_version) throw FormatError("checkpoint has no version field");
  if (!have_params) throw FormatError("checkpoint has no parameter section");
  if (checksum != io::sha256_hex(payload))
    throw FormatError("checkpoint checksum mismatch (file corrupted)");
  std::size_t pos = 0;
  c.params.theta = read_le(payload, pos, n_params);
  for (const auto& [name, n] : order) c.sections[name] = read_le(payload, pos, n);
  if (pos != payload.size()) throw FormatError("checkpoint payload has trailing bytes");
  try {
    c.params.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint content invalid: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(io::read_file(path));
}

}  // namespace qmeta
