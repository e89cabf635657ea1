#include "f2scil/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "f2scil/error.hpp"

namespace f2scil {
namespace {

constexpr char kMagic[8] = {'F', '2', 'S', 'C', 'K', 'P', 'T', '1'};

template <typename U>
void put(std::ostream& os, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get(std::istream& is) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = is.get();
    if (c == EOF) throw std::runtime_error("checkpoint truncated");
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_bytes(std::istream& is, std::size_t n) {
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw std::runtime_error("checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, std::span<const Parameter> params,
                      const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["groups"] = nlohmann::json::object();
  manifest["bn_running_stats"] = nlohmann::json::array();
  for (const auto& p : params) {
    manifest["groups"][p.name] = std::string(to_string(p.group));
    if (p.group == ParamGroup::bn_stats) manifest["bn_running_stats"].push_back(p.name);
  }
  manifest["meta"] = meta;
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(os, params.size());
  for (const auto& p : params) {
    put_string(os, p.name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(os, d);
    for (double v : p.value.data()) put<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  if (get_bytes(is, sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const auto manifest = nlohmann::json::parse(get_bytes(is, get<std::uint64_t>(is)));
  Checkpoint ck;
  ck.meta = manifest.value("meta", nlohmann::json::object());
  const auto count = get<std::uint64_t>(is);
  for (std::uint64_t e = 0; e < count; ++e) {
    Parameter p;
    p.name = get_bytes(is, get<std::uint32_t>(is));
    const auto rank = get<std::uint32_t>(is);
    Tensor::Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is);
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = std::bit_cast<double>(get<std::uint64_t>(is));
    p.value = Tensor(std::move(shape), std::move(data));
    const auto& groups = manifest.at("groups");
    if (!groups.contains(p.name)) throw std::runtime_error("checkpoint manifest lacks group for " + p.name);
    p.group = parse_param_group(groups.at(p.name).get<std::string>());
    ck.params.push_back(std::move(p));
  }
  return ck;
}

void save_classifier(const std::filesystem::path& path, const Classifier& model) {
  nlohmann::json meta;
  meta["kind"] = "classifier";
  meta["input_dim"] = model.shape().input_dim;
  meta["hidden"] = model.shape().hidden;
  meta["bn_momentum"] = model.shape().bn_momentum;
  meta["bn_epsilon"] = model.shape().bn_epsilon;
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& r : model.session_map()) sessions.push_back({{"begin", r.begin}, {"end", r.end}});
  meta["session_columns"] = sessions;
  write_checkpoint(path, model.parameters(), meta);
}

Classifier load_classifier(const std::filesystem::path& path) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.meta.value("kind", "") != "classifier")
    throw std::runtime_error("checkpoint does not hold a classifier: " + path.string());
  ClassifierShape shape;
  shape.input_dim = ck.meta.at("input_dim").get<std::size_t>();
  shape.hidden = ck.meta.at("hidden").get<std::vector<std::size_t>>();
  shape.bn_momentum = ck.meta.at("bn_momentum").get<double>();
  shape.bn_epsilon = ck.meta.at("bn_epsilon").get<double>();
  std::vector<std::size_t> widths;
  for (const auto& r : ck.meta.at("session_columns"))
    widths.push_back(r.at("end").get<std::size_t>() - r.at("begin").get<std::size_t>());
  return Classifier::from_parameters(shape, widths, std::move(ck.params));
}

}  // namespace f2scil
