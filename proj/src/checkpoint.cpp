#include "kgzsl/gan.hpp"

#include <cstring>
#include <fstream>

namespace kgzsl {

namespace {

constexpr char kMagic[9] = {'K', 'G', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in, const std::string& source) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ParseError(source + ": truncated checkpoint");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& source) {
  const auto len = get<std::uint32_t>(in, source);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw ParseError(source + ": truncated checkpoint");
  return s;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXf& m) {
  put(out, static_cast<std::uint32_t>(m.rows()));
  put(out, static_cast<std::uint32_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) put(out, m(r, c));
}

Eigen::MatrixXf get_matrix(std::istream& in, const std::string& source) {
  const auto rows = get<std::uint32_t>(in, source);
  const auto cols = get<std::uint32_t>(in, source);
  Eigen::MatrixXf m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = get<float>(in, source);
  return m;
}

void put_config(std::ostream& out, const GanConfig& c) {
  put(out, static_cast<std::int64_t>(c.noise_dim));
  put(out, static_cast<std::int64_t>(c.feature_dim));
  put(out, static_cast<std::int64_t>(c.generator_hidden));
  put(out, static_cast<std::int64_t>(c.discriminator_hidden));
  put(out, c.lambda_cls);
  put(out, c.beta_gp);
  put(out, c.learning_rate);
  put(out, c.adam_beta1);
  put(out, c.adam_beta2);
  put(out, static_cast<std::int32_t>(c.critic_steps));
  put(out, static_cast<std::int64_t>(c.batch_size));
  put(out, static_cast<std::int32_t>(c.epochs));
  put(out, static_cast<std::int32_t>(c.checkpoint_every));
  put(out, static_cast<std::int64_t>(c.synthesize_per_class));
  put(out, c.pretrain_learning_rate);
  put(out, static_cast<std::int32_t>(c.pretrain_epochs));
  put(out, c.seed);
}

GanConfig get_config(std::istream& in, const std::string& source) {
  GanConfig c;
  c.noise_dim = static_cast<Index>(get<std::int64_t>(in, source));
  c.feature_dim = static_cast<Index>(get<std::int64_t>(in, source));
  c.generator_hidden = static_cast<Index>(get<std::int64_t>(in, source));
  c.discriminator_hidden = static_cast<Index>(get<std::int64_t>(in, source));
  c.lambda_cls = get<double>(in, source);
  c.beta_gp = get<double>(in, source);
  c.learning_rate = get<double>(in, source);
  c.adam_beta1 = get<double>(in, source);
  c.adam_beta2 = get<double>(in, source);
  c.critic_steps = get<std::int32_t>(in, source);
  c.batch_size = static_cast<Index>(get<std::int64_t>(in, source));
  c.epochs = get<std::int32_t>(in, source);
  c.checkpoint_every = get<std::int32_t>(in, source);
  c.synthesize_per_class = static_cast<Index>(get<std::int64_t>(in, source));
  c.pretrain_learning_rate = get<double>(in, source);
  c.pretrain_epochs = get<std::int32_t>(in, source);
  c.seed = get<std::uint64_t>(in, source);
  return c;
}

}  // namespace

void save_checkpoint(const GanCheckpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  put(out, kVersion);
  put_config(out, ck.config);
  put(out, static_cast<std::int64_t>(ck.embed_dim));
  put(out, static_cast<std::int32_t>(ck.epoch));
  put_string(out, ck.rng_state);
  put_string(out, ck.embeddings_digest);
  put_string(out, ck.features_digest);
  put_string(out, ck.config_digest);

  put(out, static_cast<std::uint32_t>(ck.seen_classifier.label_count()));
  put(out, static_cast<std::uint32_t>(ck.seen_classifier.dim()));
  for (const auto& label : ck.seen_classifier.labels) put_string(out, label);
  for (Index r = 0; r < ck.seen_classifier.label_count(); ++r)
    for (Index c = 0; c < ck.seen_classifier.dim(); ++c)
      put(out, static_cast<float>(ck.seen_classifier.theta(r, c)));

  put(out, static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, value] : ck.params) {
    put_string(out, name);
    put_matrix(out, value);
  }
}

GanCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path.string() + "'");
  const std::string source = path.filename().string();

  char magic[9];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ParseError(source + ": bad checkpoint magic");
  const auto version = get<std::uint32_t>(in, source);
  if (version != kVersion)
    throw ParseError(source + ": unsupported checkpoint version " + std::to_string(version));

  GanCheckpoint ck;
  ck.config = get_config(in, source);
  ck.embed_dim = static_cast<Index>(get<std::int64_t>(in, source));
  ck.epoch = get<std::int32_t>(in, source);
  ck.rng_state = get_string(in, source);
  ck.embeddings_digest = get_string(in, source);
  ck.features_digest = get_string(in, source);
  ck.config_digest = get_string(in, source);

  const auto n_labels = get<std::uint32_t>(in, source);
  const auto cls_dim = get<std::uint32_t>(in, source);
  std::vector<std::string> labels;
  for (std::uint32_t i = 0; i < n_labels; ++i) labels.push_back(get_string(in, source));
  MatXd theta(n_labels, cls_dim);
  for (std::uint32_t r = 0; r < n_labels; ++r)
    for (std::uint32_t c = 0; c < cls_dim; ++c)
      theta(static_cast<Index>(r), static_cast<Index>(c)) =
          static_cast<double>(get<float>(in, source));
  if (n_labels > 0) ck.seen_classifier = make_softmax_classifier(std::move(labels), std::move(theta));

  const auto n_params = get<std::uint32_t>(in, source);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = get_string(in, source);
    ck.params.emplace_back(std::move(name), get_matrix(in, source));
  }
  return ck;
}

}  // namespace kgzsl
