#include "hnca/core.hpp"

#include <nlohmann/json.hpp>

namespace hnca {

namespace {

// SplitMix64 finalizer; mixes seed/stream ids into engine seeds.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_pair(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), gen_(mix_pair(seed, stream)) {}

double RngStream::uniform() {
  // 53-bit mantissa conversion; avoids stdlib distribution objects, whose
  // output is not pinned by the standard.
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

bool RngStream::bernoulli(double p_true) { return uniform() < p_true; }

int RngStream::categorical(const Vec& pmf) {
  const double u = uniform() * pmf.sum();
  double cum = 0.0;
  for (int i = 0; i < pmf.size(); ++i) {
    cum += pmf(i);
    if (u < cum) return i;
  }
  return static_cast<int>(pmf.size()) - 1;
}

RngStream RngStream::substream(std::uint64_t a, std::uint64_t b) const {
  return RngStream(seed_, mix_pair(mix_pair(stream_, a), b));
}

std::string to_string(OutputMapping m) {
  return m == OutputMapping::ZeroOne ? "zero_one" : "plus_minus_one";
}

OutputMapping output_mapping_from_string(const std::string& s) {
  if (s == "zero_one") return OutputMapping::ZeroOne;
  if (s == "plus_minus_one") return OutputMapping::PlusMinusOne;
  throw SpecError("unknown output_mapping: " + s);
}

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::Hnca: return "hnca";
    case Estimator::Reinforce: return "reinforce";
    case Estimator::BackpropTanh: return "backprop_tanh";
    case Estimator::BackpropRelu: return "backprop_relu";
    case Estimator::BackpropSigmoid: return "backprop_sigmoid";
  }
  throw SpecError("unknown estimator enum value");
}

Estimator estimator_from_string(const std::string& s) {
  if (s == "hnca") return Estimator::Hnca;
  if (s == "reinforce") return Estimator::Reinforce;
  if (s == "backprop_tanh") return Estimator::BackpropTanh;
  if (s == "backprop_relu") return Estimator::BackpropRelu;
  if (s == "backprop_sigmoid") return Estimator::BackpropSigmoid;
  throw SpecError("unknown estimator: " + s);
}

void NetworkSpec::validate() const {
  if (input_dim < 1) throw SpecError("input_dim must be >= 1");
  for (int w : hidden_layers) {
    if (w < 1) throw SpecError("every hidden layer width must be >= 1");
  }
  if (num_classes < 2) throw SpecError("num_classes must be >= 2");
}

std::string NetworkSpec::to_json() const {
  nlohmann::json j;
  j["input_dim"] = input_dim;
  j["hidden_layers"] = hidden_layers;
  j["num_classes"] = num_classes;
  j["output_mapping"] = to_string(output_mapping);
  j["seed"] = seed;
  return j.dump();
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NetworkSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  spec.num_classes = j.at("num_classes").get<int>();
  spec.output_mapping =
      output_mapping_from_string(j.at("output_mapping").get<std::string>());
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.validate();
  return spec;
}

void UnitParams::validate() const {
  if (!W.allFinite() || !b.allFinite()) {
    throw SpecError("unit parameters contain non-finite entries");
  }
  if (W.rows() != b.size()) {
    throw SpecError("weight rows and bias length disagree");
  }
}

UnitParams glorot_init(int fan_in, int fan_out, RngStream& rng) {
  return glorot_init_layer(1, fan_in, fan_out, rng);
}

UnitParams glorot_init_layer(int rows, int fan_in, int fan_out,
                             RngStream& rng) {
  if (fan_in < 1 || fan_out < 1 || rows < 1) {
    throw SpecError("glorot init requires positive dimensions");
  }
  const double bound = glorot_bound(fan_in, fan_out);
  UnitParams p;
  p.W.resize(rows, fan_in);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < fan_in; ++c) {
      p.W(r, c) = rng.uniform(-bound, bound);
    }
  }
  p.b = Vec::Zero(rows);
  return p;
}

}  // namespace hnca
