#include "ckge/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ckge/errors.hpp"

namespace ckge {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  return m;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

constexpr double kTokenStd = 0.1;

GruWeights init_gru(std::size_t input, std::size_t hidden, Rng& rng) {
  const auto in = static_cast<Eigen::Index>(input);
  const auto h = static_cast<Eigen::Index>(hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruWeights g;
  g.wz = uniform_matrix(in, h, bound, rng);
  g.wr = uniform_matrix(in, h, bound, rng);
  g.wn = uniform_matrix(in, h, bound, rng);
  g.uz = uniform_matrix(h, h, bound, rng);
  g.ur = uniform_matrix(h, h, bound, rng);
  g.un = uniform_matrix(h, h, bound, rng);
  g.bz = Matrix::Zero(1, h);
  g.br = Matrix::Zero(1, h);
  g.bn = Matrix::Zero(1, h);
  return g;
}

void append_gru(std::vector<std::pair<std::string, Matrix*>>& out, const std::string& prefix,
                GruWeights& g) {
  out.emplace_back(prefix + ".wz", &g.wz);
  out.emplace_back(prefix + ".wr", &g.wr);
  out.emplace_back(prefix + ".wn", &g.wn);
  out.emplace_back(prefix + ".uz", &g.uz);
  out.emplace_back(prefix + ".ur", &g.ur);
  out.emplace_back(prefix + ".un", &g.un);
  out.emplace_back(prefix + ".bz", &g.bz);
  out.emplace_back(prefix + ".br", &g.br);
  out.emplace_back(prefix + ".bn", &g.bn);
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

// Plain Eigen GRU step over a batch of rows.
Matrix gru_step(const GruWeights& g, const Matrix& x, const Matrix& h) {
  Matrix z = x * g.wz + h * g.uz;
  z.rowwise() += g.bz.row(0);
  z = sigmoid(z);
  Matrix r = x * g.wr + h * g.ur;
  r.rowwise() += g.br.row(0);
  r = sigmoid(r);
  Matrix n = x * g.wn + r.cwiseProduct(h) * g.un;
  n.rowwise() += g.bn.row(0);
  n = n.array().tanh().matrix();
  return ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

Matrix concat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix gather(const Matrix& table, const std::vector<std::uint32_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), table.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = table.row(rows[k]);
  return out;
}

Matrix encoder_state(const GeneratorParams& p, std::span<const Triple> batch) {
  std::vector<std::uint32_t> heads, rels, tails;
  for (const auto& t : batch) {
    if (t.head >= p.num_entities || t.tail >= p.num_entities || t.relation >= p.num_relations) {
      throw std::out_of_range("triple outside the generator vocabulary");
    }
    heads.push_back(t.head);
    rels.push_back(t.relation);
    tails.push_back(t.tail);
  }
  Matrix h = Matrix::Zero(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(p.hidden_dim));
  h = gru_step(p.encoder, gather(p.entity_tokens, heads), h);
  h = gru_step(p.encoder, gather(p.relation_tokens, rels), h);
  h = gru_step(p.encoder, gather(p.entity_tokens, tails), h);
  return h;
}

std::uint32_t argmax_row(const Matrix& logits, Eigen::Index row) {
  Eigen::Index best = 0;
  logits.row(row).maxCoeff(&best);
  return static_cast<std::uint32_t>(best);
}

std::uint32_t sample_row(const Matrix& logits, Eigen::Index row, Rng& rng) {
  const auto r = logits.row(row);
  const double peak = r.maxCoeff();
  double total = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k) total += std::exp(r(k) - peak);
  double u = rng.uniform() * total;
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    u -= std::exp(r(k) - peak);
    if (u < 0.0) return static_cast<std::uint32_t>(k);
  }
  return static_cast<std::uint32_t>(r.size() - 1);
}

// Decodes a batch of latents. `pick` chooses a token from a logits row.
template <class Pick>
TripleList decode_batch(const GeneratorParams& p, const Matrix& z, Pick pick,
                        Matrix* step_logits = nullptr) {
  const auto batch = z.rows();
  Matrix s = affine(z, p.init_w, p.init_b).array().tanh().matrix();
  TripleList out(static_cast<std::size_t>(batch));

  Matrix bos(batch, p.bos.cols());
  bos.rowwise() = p.bos.row(0);
  s = gru_step(p.decoder, concat(z, bos), s);
  Matrix le = affine(s, p.out_entity_w, p.out_entity_b);
  std::vector<std::uint32_t> heads(static_cast<std::size_t>(batch));
  for (Eigen::Index i = 0; i < batch; ++i) heads[static_cast<std::size_t>(i)] = pick(le, i);
  if (step_logits) step_logits[0] = le;

  s = gru_step(p.decoder, concat(z, gather(p.entity_tokens, heads)), s);
  Matrix lr = affine(s, p.out_relation_w, p.out_relation_b);
  std::vector<std::uint32_t> rels(static_cast<std::size_t>(batch));
  for (Eigen::Index i = 0; i < batch; ++i) rels[static_cast<std::size_t>(i)] = pick(lr, i);
  if (step_logits) step_logits[1] = lr;

  s = gru_step(p.decoder, concat(z, gather(p.relation_tokens, rels)), s);
  Matrix lt = affine(s, p.out_entity_w, p.out_entity_b);
  if (step_logits) step_logits[2] = lt;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = Triple{heads[k], rels[k], pick(lt, i)};
  }
  return out;
}

struct GruVars {
  ad::Var wz, wr, wn, uz, ur, un, bz, br, bn;
};

ad::Var gru_tape(ad::Tape& t, const GruVars& g, ad::Var x, ad::Var h) {
  auto z = t.sigmoid(t.add_row(t.add(t.matmul(x, g.wz), t.matmul(h, g.uz)), g.bz));
  auto r = t.sigmoid(t.add_row(t.add(t.matmul(x, g.wr), t.matmul(h, g.ur)), g.br));
  auto n = t.tanh(t.add_row(t.add(t.matmul(x, g.wn), t.matmul(t.mul(r, h), g.un)), g.bn));
  return t.add(t.mul(t.one_minus(z), n), t.mul(z, h));
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> GeneratorParams::tensors() {
  std::vector<std::pair<std::string, Matrix*>> out;
  out.emplace_back("entity_tokens", &entity_tokens);
  out.emplace_back("relation_tokens", &relation_tokens);
  out.emplace_back("bos", &bos);
  append_gru(out, "encoder", encoder);
  out.emplace_back("mu_w", &mu_w);
  out.emplace_back("mu_b", &mu_b);
  out.emplace_back("logvar_w", &logvar_w);
  out.emplace_back("logvar_b", &logvar_b);
  out.emplace_back("init_w", &init_w);
  out.emplace_back("init_b", &init_b);
  append_gru(out, "decoder", decoder);
  out.emplace_back("out_entity_w", &out_entity_w);
  out.emplace_back("out_entity_b", &out_entity_b);
  out.emplace_back("out_relation_w", &out_relation_w);
  out.emplace_back("out_relation_b", &out_relation_b);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> GeneratorParams::tensors() const {
  auto mutable_view = const_cast<GeneratorParams*>(this)->tensors();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, m] : mutable_view) out.emplace_back(std::move(name), m);
  return out;
}

std::size_t GeneratorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

GeneratorParams init_generator(std::size_t num_entities, std::size_t num_relations,
                               const GeneratorConfig& cfg, Rng& rng) {
  if (cfg.token_dim == 0 || cfg.latent_dim == 0 || cfg.hidden_dim == 0) {
    throw ConfigError("generator dimensions must be positive");
  }
  GeneratorParams p;
  p.num_entities = num_entities;
  p.num_relations = num_relations;
  p.token_dim = cfg.token_dim;
  p.latent_dim = cfg.latent_dim;
  p.hidden_dim = cfg.hidden_dim;
  const auto dv = static_cast<Eigen::Index>(cfg.token_dim);
  const auto dz = static_cast<Eigen::Index>(cfg.latent_dim);
  const auto h = static_cast<Eigen::Index>(cfg.hidden_dim);
  const double hb = 1.0 / std::sqrt(static_cast<double>(h));
  const double zb = 1.0 / std::sqrt(static_cast<double>(dz));

  p.entity_tokens = normal_matrix(static_cast<Eigen::Index>(num_entities), dv, kTokenStd, rng);
  p.relation_tokens = normal_matrix(static_cast<Eigen::Index>(num_relations), dv, kTokenStd, rng);
  p.bos = normal_matrix(1, dv, kTokenStd, rng);
  p.encoder = init_gru(cfg.token_dim, cfg.hidden_dim, rng);
  p.mu_w = uniform_matrix(h, dz, hb, rng);
  p.mu_b = Matrix::Zero(1, dz);
  p.logvar_w = uniform_matrix(h, dz, 0.1 * hb, rng);
  p.logvar_b = Matrix::Zero(1, dz);
  p.init_w = uniform_matrix(dz, h, zb, rng);
  p.init_b = Matrix::Zero(1, h);
  p.decoder = init_gru(cfg.latent_dim + cfg.token_dim, cfg.hidden_dim, rng);
  p.out_entity_w = uniform_matrix(h, static_cast<Eigen::Index>(num_entities), hb, rng);
  p.out_entity_b = Matrix::Zero(1, static_cast<Eigen::Index>(num_entities));
  p.out_relation_w = uniform_matrix(h, static_cast<Eigen::Index>(num_relations), hb, rng);
  p.out_relation_b = Matrix::Zero(1, static_cast<Eigen::Index>(num_relations));
  return p;
}

GeneratorParams zeros_like(const GeneratorParams& params) {
  GeneratorParams z = params;
  for (auto& [name, m] : z.tensors()) m->setZero();
  return z;
}

void expand_generator(GeneratorParams& p, std::size_t num_entities, std::size_t num_relations,
                      Rng& rng) {
  if (num_entities < p.num_entities || num_relations < p.num_relations) {
    throw std::invalid_argument("generator vocabulary cannot shrink");
  }
  const auto dv = static_cast<Eigen::Index>(p.token_dim);
  const auto h = static_cast<Eigen::Index>(p.hidden_dim);
  const double hb = 1.0 / std::sqrt(static_cast<double>(h));
  const auto old_e = static_cast<Eigen::Index>(p.num_entities);
  const auto old_r = static_cast<Eigen::Index>(p.num_relations);
  const auto new_e = static_cast<Eigen::Index>(num_entities) - old_e;
  const auto new_r = static_cast<Eigen::Index>(num_relations) - old_r;

  if (new_e > 0) {
    Matrix tokens(old_e + new_e, dv);
    tokens << p.entity_tokens, normal_matrix(new_e, dv, kTokenStd, rng);
    p.entity_tokens = std::move(tokens);
    Matrix w(h, old_e + new_e);
    w << p.out_entity_w, uniform_matrix(h, new_e, hb, rng);
    p.out_entity_w = std::move(w);
    Matrix b = Matrix::Zero(1, old_e + new_e);
    b.leftCols(old_e) = p.out_entity_b;
    p.out_entity_b = std::move(b);
  }
  if (new_r > 0) {
    Matrix tokens(old_r + new_r, dv);
    tokens << p.relation_tokens, normal_matrix(new_r, dv, kTokenStd, rng);
    p.relation_tokens = std::move(tokens);
    Matrix w(h, old_r + new_r);
    w << p.out_relation_w, uniform_matrix(h, new_r, hb, rng);
    p.out_relation_w = std::move(w);
    Matrix b = Matrix::Zero(1, old_r + new_r);
    b.leftCols(old_r) = p.out_relation_b;
    p.out_relation_b = std::move(b);
  }
  p.num_entities = num_entities;
  p.num_relations = num_relations;
}

Checkpoint generator_checkpoint(const GeneratorParams& params) {
  Checkpoint ckpt;
  ckpt.set("type", "generator");
  ckpt.set("num_entities", std::to_string(params.num_entities));
  ckpt.set("num_relations", std::to_string(params.num_relations));
  ckpt.set("token_dim", std::to_string(params.token_dim));
  ckpt.set("latent_dim", std::to_string(params.latent_dim));
  ckpt.set("hidden_dim", std::to_string(params.hidden_dim));
  for (const auto& [name, m] : params.tensors()) ckpt.add_tensor(name, *m);
  return ckpt;
}

GeneratorParams generator_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.has("type") || ckpt.get("type") != "generator") {
    throw DataError("checkpoint does not hold a generator");
  }
  GeneratorParams p;
  p.num_entities = ckpt.get_size("num_entities");
  p.num_relations = ckpt.get_size("num_relations");
  p.token_dim = ckpt.get_size("token_dim");
  p.latent_dim = ckpt.get_size("latent_dim");
  p.hidden_dim = ckpt.get_size("hidden_dim");
  for (auto& [name, m] : p.tensors()) *m = ckpt.tensor(name);
  if (static_cast<std::size_t>(p.entity_tokens.rows()) != p.num_entities ||
      static_cast<std::size_t>(p.relation_tokens.rows()) != p.num_relations) {
    throw DataError("generator checkpoint has inconsistent vocabulary sizes");
  }
  return p;
}

Posterior encode(const GeneratorParams& params, const Triple& triple) {
  const Triple one[] = {triple};
  const Matrix h = encoder_state(params, one);
  Posterior out;
  out.mu = affine(h, params.mu_w, params.mu_b).row(0).transpose();
  out.logvar = affine(h, params.logvar_w, params.logvar_b).row(0).transpose();
  return out;
}

Decoded decode(const GeneratorParams& params, const Vector& z) {
  if (static_cast<std::size_t>(z.size()) != params.latent_dim) {
    throw std::invalid_argument("latent has the wrong dimension");
  }
  if (!z.allFinite()) throw NumericalError("non-finite latent");
  Matrix zr = z.transpose();
  Matrix steps[3];
  const auto picked =
      decode_batch(params, zr, [](const Matrix& l, Eigen::Index i) { return argmax_row(l, i); }, steps);
  const auto ne = static_cast<Eigen::Index>(params.num_entities);
  const auto nr = static_cast<Eigen::Index>(params.num_relations);
  Decoded out;
  out.logits = Matrix::Constant(3, ne + nr, kNegInf);
  out.logits.row(0).head(ne) = steps[0].row(0);
  out.logits.row(1).tail(nr) = steps[1].row(0);
  out.logits.row(2).head(ne) = steps[2].row(0);
  out.greedy = picked[0];
  return out;
}

double anneal_alpha(double epoch, double max, double slope, double position) {
  if (!(slope > 0.0)) throw ConfigError("annealing slope must be positive");
  return max / (1.0 + std::exp(-slope * (epoch - position)));
}

double gaussian_kl(const Matrix& mu, const Matrix& logvar) {
  return 0.5 * (mu.array().square() + logvar.array().exp() - logvar.array() - 1.0).sum();
}

VaeLoss vae_loss(const GeneratorParams& p, std::span<const Triple> batch, const Matrix& noise,
                 double alpha, GeneratorParams* grads) {
  if (batch.empty()) throw std::invalid_argument("empty generator batch");
  if (noise.rows() != static_cast<Eigen::Index>(batch.size()) ||
      noise.cols() != static_cast<Eigen::Index>(p.latent_dim)) {
    throw std::invalid_argument("noise must be batch x latent_dim");
  }
  GeneratorParams scratch;
  if (!grads) {
    scratch = zeros_like(p);
    grads = &scratch;
  }

  ad::Tape t;
  auto bind = [&](const Matrix& v, Matrix& g) { return t.parameter(v, g); };
  auto bind_gru = [&](const GruWeights& w, GruWeights& g) {
    return GruVars{bind(w.wz, g.wz), bind(w.wr, g.wr), bind(w.wn, g.wn),
                   bind(w.uz, g.uz), bind(w.ur, g.ur), bind(w.un, g.un),
                   bind(w.bz, g.bz), bind(w.br, g.br), bind(w.bn, g.bn)};
  };
  const auto ent = bind(p.entity_tokens, grads->entity_tokens);
  const auto rel = bind(p.relation_tokens, grads->relation_tokens);
  const auto bos = bind(p.bos, grads->bos);
  const auto enc = bind_gru(p.encoder, grads->encoder);
  const auto mu_w = bind(p.mu_w, grads->mu_w);
  const auto mu_b = bind(p.mu_b, grads->mu_b);
  const auto lv_w = bind(p.logvar_w, grads->logvar_w);
  const auto lv_b = bind(p.logvar_b, grads->logvar_b);
  const auto init_w = bind(p.init_w, grads->init_w);
  const auto init_b = bind(p.init_b, grads->init_b);
  const auto dec = bind_gru(p.decoder, grads->decoder);
  const auto oe_w = bind(p.out_entity_w, grads->out_entity_w);
  const auto oe_b = bind(p.out_entity_b, grads->out_entity_b);
  const auto or_w = bind(p.out_relation_w, grads->out_relation_w);
  const auto or_b = bind(p.out_relation_b, grads->out_relation_b);

  std::vector<std::uint32_t> heads, rels, tails;
  for (const auto& tr : batch) {
    if (tr.head >= p.num_entities || tr.tail >= p.num_entities || tr.relation >= p.num_relations) {
      throw std::out_of_range("triple outside the generator vocabulary");
    }
    heads.push_back(tr.head);
    rels.push_back(tr.relation);
    tails.push_back(tr.tail);
  }
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto x_h = t.gather_rows(ent, heads);
  const auto x_r = t.gather_rows(rel, rels);
  const auto x_t = t.gather_rows(ent, tails);

  auto h = t.constant(Matrix::Zero(b, static_cast<Eigen::Index>(p.hidden_dim)));
  h = gru_tape(t, enc, x_h, h);
  h = gru_tape(t, enc, x_r, h);
  h = gru_tape(t, enc, x_t, h);
  const auto mu = t.add_row(t.matmul(h, mu_w), mu_b);
  const auto logvar = t.add_row(t.matmul(h, lv_w), lv_b);

  const auto eps = t.constant(noise);
  const auto z = t.add(mu, t.mul(t.exp(t.scale(logvar, 0.5)), eps));

  auto s = t.tanh(t.add_row(t.matmul(z, init_w), init_b));
  const auto x_bos = t.gather_rows(bos, std::vector<std::uint32_t>(batch.size(), 0));
  s = gru_tape(t, dec, t.concat_cols(z, x_bos), s);
  const auto l1 = t.add_row(t.matmul(s, oe_w), oe_b);
  s = gru_tape(t, dec, t.concat_cols(z, x_h), s);
  const auto l2 = t.add_row(t.matmul(s, or_w), or_b);
  s = gru_tape(t, dec, t.concat_cols(z, x_r), s);
  const auto l3 = t.add_row(t.matmul(s, oe_w), oe_b);

  const auto ne = p.num_entities;
  const auto nr = p.num_relations;
  const auto rec = t.add(t.add(t.softmax_xent(l1, heads, 0, ne), t.softmax_xent(l2, rels, 0, nr)),
                         t.softmax_xent(l3, tails, 0, ne));
  const auto kl_terms =
      t.add_scalar(t.sub(t.add(t.square(mu), t.exp(logvar)), logvar), -1.0);
  const auto kl = t.scale(t.sum(kl_terms), 0.5);

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto total = t.scale(t.add(rec, t.scale(kl, alpha)), inv_b);

  VaeLoss out;
  out.loss = t.value(total)(0, 0);
  out.reconstruction = t.value(rec)(0, 0) * inv_b;
  out.kl = t.value(kl)(0, 0) * inv_b;
  if (!std::isfinite(out.loss)) throw NumericalError("non-finite generator loss");
  t.backward(total);
  return out;
}

std::vector<GeneratorEpoch> train_generator(GeneratorParams& params, std::span<const Triple> triples,
                                            const GeneratorConfig& cfg, Rng& rng,
                                            const GeneratorCallback& on_epoch) {
  if (triples.empty()) throw std::invalid_argument("generator needs training triples");
  if (cfg.batch_size == 0) throw ConfigError("generator batch size must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("generator learning rate must be positive");

  GeneratorParams velocity = zeros_like(params);
  GeneratorParams grads = zeros_like(params);
  GeneratorParams last_good = params;
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<GeneratorEpoch> history;
  history.reserve(cfg.epochs);
  const double position = cfg.effective_anneal_position();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    const double alpha = anneal_alpha(static_cast<double>(epoch), cfg.anneal_max, cfg.anneal_slope, position);
    GeneratorEpoch summary;
    summary.epoch = epoch;
    std::size_t batches = 0;
    TripleList batch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(triples[order[k]]);
      Matrix noise(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(params.latent_dim));
      for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();

      for (auto& [name, m] : grads.tensors()) m->setZero();
      VaeLoss loss;
      try {
        loss = vae_loss(params, batch, noise, alpha, &grads);
      } catch (const NumericalError&) {
        params = last_good;
        throw NumericalError("generator diverged at epoch " + std::to_string(epoch) +
                             "; parameters restored to epoch " + std::to_string(epoch - 1));
      }

      double norm2 = 0.0;
      for (const auto& [name, g] : grads.tensors()) norm2 += g->squaredNorm();
      if (!std::isfinite(norm2)) {
        params = last_good;
        throw NumericalError("non-finite generator gradient at epoch " + std::to_string(epoch));
      }
      const double norm = std::sqrt(norm2);
      const double clip = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

      auto pv = params.tensors();
      auto vv = velocity.tensors();
      auto gv = grads.tensors();
      for (std::size_t k = 0; k < pv.size(); ++k) {
        *vv[k].second = cfg.momentum * *vv[k].second - (cfg.lr * clip) * *gv[k].second;
        *pv[k].second += *vv[k].second;
      }
      summary.mean.loss += loss.loss;
      summary.mean.reconstruction += loss.reconstruction;
      summary.mean.kl += loss.kl;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    summary.mean.loss *= inv;
    summary.mean.reconstruction *= inv;
    summary.mean.kl *= inv;
    last_good = params;
    history.push_back(summary);
    if (on_epoch) on_epoch(summary);
  }
  return history;
}

TripleList sample_triples(const GeneratorParams& params, std::size_t count, Rng& rng, bool greedy) {
  TripleList out;
  out.reserve(count);
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < count; start += kChunk) {
    const std::size_t n = std::min(kChunk, count - start);
    Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(params.latent_dim));
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    TripleList part;
    if (greedy) {
      part = decode_batch(params, z, [](const Matrix& l, Eigen::Index i) { return argmax_row(l, i); });
    } else {
      part = decode_batch(params, z,
                          [&rng](const Matrix& l, Eigen::Index i) { return sample_row(l, i, rng); });
    }
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

double reconstruction_accuracy(const GeneratorParams& params, std::span<const Triple> triples) {
  if (triples.empty()) return 0.0;
  const Matrix h = encoder_state(params, triples);
  const Matrix mu = affine(h, params.mu_w, params.mu_b);
  const auto decoded =
      decode_batch(params, mu, [](const Matrix& l, Eigen::Index i) { return argmax_row(l, i); });
  std::size_t exact = 0;
  for (std::size_t k = 0; k < triples.size(); ++k) exact += decoded[k] == triples[k] ? 1 : 0;
  return static_cast<double>(exact) / static_cast<double>(triples.size());
}

}  // namespace ckge
