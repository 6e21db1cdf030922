#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ckge/autodiff.hpp"
#include "ckge/checkpoint.hpp"
#include "ckge/kg_data.hpp"
#include "ckge/matrix.hpp"
#include "ckge/rng.hpp"

namespace ckge {

struct GeneratorConfig {
  std::size_t token_dim = 64;   // d_V
  std::size_t latent_dim = 32;  // d_z
  std::size_t hidden_dim = 64;
  std::size_t epochs = 500;
  std::size_t batch_size = 128;
  double lr = 0.05;
  double momentum = 0.9;
  double clip_norm = 5.0;  // global gradient-norm clip, <= 0 disables
  double anneal_max = 1.0;
  double anneal_slope = 0.05;
  double anneal_position = -1.0;  // < 0 means epochs / 4
  bool sample_greedy = false;      // argmax instead of multinomial at generation

  double effective_anneal_position() const {
    return anneal_position < 0.0 ? static_cast<double>(epochs) / 4.0 : anneal_position;
  }
};

// GRU weights: z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
// n = tanh(x Wn + (r * h) Un + bn), h' = (1 - z) * n + z * h.
struct GruWeights {
  Matrix wz, wr, wn;  // input x hidden
  Matrix uz, ur, un;  // hidden x hidden
  Matrix bz, br, bn;  // 1 x hidden
};

// Sequence VAE over (head, relation, tail) token strings. Entity and
// relation tokens live in separate tables, and so do their output
// projections, which is how decoding is restricted to entities at steps 1
// and 3 and to relations at step 2.
struct GeneratorParams {
  std::size_t num_entities = 0;
  std::size_t num_relations = 0;
  std::size_t token_dim = 0;
  std::size_t latent_dim = 0;
  std::size_t hidden_dim = 0;

  Matrix entity_tokens;    // |E| x d_V
  Matrix relation_tokens;  // |R| x d_V
  Matrix bos;              // 1 x d_V, decoder input at step 1
  GruWeights encoder;      // input d_V
  Matrix mu_w, mu_b;       // hidden x d_z, 1 x d_z
  Matrix logvar_w, logvar_b;
  Matrix init_w, init_b;   // d_z x hidden, 1 x hidden: z -> decoder state
  GruWeights decoder;      // input d_z + d_V
  Matrix out_entity_w, out_entity_b;      // hidden x |E|, 1 x |E|
  Matrix out_relation_w, out_relation_b;  // hidden x |R|, 1 x |R|

  // Every tensor in a fixed order, with its checkpoint name.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;
  std::size_t parameter_count() const;
};

GeneratorParams init_generator(std::size_t num_entities, std::size_t num_relations,
                               const GeneratorConfig& cfg, Rng& rng);
// Same shapes, all zeros.
GeneratorParams zeros_like(const GeneratorParams& params);
// Adds token rows and output columns for new ids; existing values are kept.
void expand_generator(GeneratorParams& params, std::size_t num_entities,
                      std::size_t num_relations, Rng& rng);

Checkpoint generator_checkpoint(const GeneratorParams& params);
GeneratorParams generator_from_checkpoint(const Checkpoint& ckpt);

struct Posterior {
  Vector mu;
  Vector logvar;
};

Posterior encode(const GeneratorParams& params, const Triple& triple);

struct Decoded {
  // 3 x (|E| + |R|): entity columns first, then relation columns. Disallowed
  // columns hold -infinity.
  Matrix logits;
  Triple greedy;
};

// Greedy decode of a single latent; each step is fed the argmax token.
Decoded decode(const GeneratorParams& params, const Vector& z);

// alpha(epoch) = max / (1 + exp(-slope (epoch - position))).
double anneal_alpha(double epoch, double max, double slope, double position);

// 0.5 * sum(mu^2 + exp(logvar) - logvar - 1), per row, summed.
double gaussian_kl(const Matrix& mu, const Matrix& logvar);

struct VaeLoss {
  double loss = 0.0;            // reconstruction + alpha * kl, batch mean
  double reconstruction = 0.0;  // batch mean
  double kl = 0.0;              // batch mean
};

// Negated annealed ELBO of a batch, one reparameterised latent per triple.
// `noise` is batch x d_z standard normal. Gradients are added into `grads`
// (shaped like params) when it is non-null.
VaeLoss vae_loss(const GeneratorParams& params, std::span<const Triple> batch, const Matrix& noise,
                 double alpha, GeneratorParams* grads);

struct GeneratorEpoch {
  std::size_t epoch = 0;  // 1-based
  VaeLoss mean;           // averaged over the epoch's batches
};

using GeneratorCallback = std::function<void(const GeneratorEpoch&)>;

// Momentum SGD over cfg.epochs epochs. On a non-finite loss the parameters
// are restored to the end of the last finite epoch and NumericalError is
// thrown.
std::vector<GeneratorEpoch> train_generator(GeneratorParams& params, std::span<const Triple> triples,
                                            const GeneratorConfig& cfg, Rng& rng,
                                            const GeneratorCallback& on_epoch = {});

// z ~ N(0, I), then decoding with tokens drawn from the masked softmax at
// temperature 1 (or argmax when `greedy`).
TripleList sample_triples(const GeneratorParams& params, std::size_t count, Rng& rng,
                          bool greedy = false);

// Fraction of triples whose greedy decode of the posterior mean is exact.
double reconstruction_accuracy(const GeneratorParams& params, std::span<const Triple> triples);

}  // namespace ckge
