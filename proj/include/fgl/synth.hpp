#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgl/core.hpp"
#include "fgl/dataset.hpp"
#include "fgl/idx.hpp"
#include "fgl/prompts.hpp"

namespace fgl {

// Server-side synthesis: turn aggregated prompts into a surrogate training
// set. The server conditions a foundation prior (its own world knowledge,
// per-class mixtures) on the prompts; entity-level prompts carry enough
// statistics to build the target mixture without any prior.

struct ClassMixture {
    std::vector<double> weights; // sums to 1
    std::vector<std::vector<double>> means;
    std::vector<std::vector<double>> vars; // diagonal, > 0

    std::size_t components() const { return weights.size(); }
};

// The server's stand-in for a pretrained generative model: a library of
// class-conditional mixtures looked up by descriptor text.
struct FoundationPrior {
    std::size_t dim = 0;
    std::map<std::string, ClassMixture> classes; // descriptor -> mixture

    const ClassMixture& resolve(const std::string& descriptor) const {
        auto it = classes.find(descriptor);
        if (it == classes.end())
            fail("foundation prior cannot resolve descriptor \"%s\"", descriptor.c_str());
        return it->second;
    }
};

inline FoundationPrior prior_from_gmm(const GmmSpec& spec,
                                      std::vector<std::string> names = {}) {
    spec.validate();
    if (names.empty()) names = default_class_names(spec.classes.size());
    if (names.size() != spec.classes.size())
        fail("prior_from_gmm: %zu names for %zu classes", names.size(), spec.classes.size());
    FoundationPrior prior;
    prior.dim = spec.dim();
    for (std::size_t cls = 0; cls < spec.classes.size(); ++cls) {
        ClassMixture mix;
        for (const auto& comp : spec.classes[cls].components) {
            mix.weights.push_back(comp.weight);
            mix.means.push_back(comp.mean);
            mix.vars.push_back(comp.var);
        }
        prior.classes[names[cls]] = std::move(mix);
    }
    return prior;
}

namespace detail {

// Variances reported by k-means can collapse to zero on tiny clusters; floor
// them so the mixture stays proper.
inline constexpr double kVarFloor = 1e-6;

inline ClassMixture mixture_from_clusters(const std::vector<ClusterStat>& clusters) {
    ClassMixture mix;
    double total = 0.0;
    for (const auto& c : clusters) total += static_cast<double>(c.count);
    if (total <= 0.0) fail("entity prompt has no samples behind it");
    for (const auto& c : clusters) {
        mix.weights.push_back(static_cast<double>(c.count) / total);
        mix.means.push_back(c.mean);
        auto var = c.var;
        for (auto& v : var) v = std::max(v, kVarFloor);
        mix.vars.push_back(std::move(var));
    }
    return mix;
}

inline std::size_t pick_component(const ClassMixture& mix, Rng& rng) {
    double u = rng.uniform();
    for (std::size_t j = 0; j < mix.components(); ++j) {
        u -= mix.weights[j];
        if (u <= 0.0) return j;
    }
    return mix.components() - 1;
}

inline void sample_mixture(const ClassMixture& mix, Rng& rng, double* out, std::size_t dim) {
    const std::size_t j = pick_component(mix, rng);
    for (std::size_t d = 0; d < dim; ++d)
        out[d] = mix.means[j][d] + std::sqrt(mix.vars[j][d]) * rng.gaussian();
}

// log N(x; mean, diag var), summed over dimensions.
inline double log_gaussian(const double* x, const std::vector<double>& mean,
                           const std::vector<double>& var) {
    constexpr double kLog2Pi = 1.8378770664093453;
    double lp = 0.0;
    for (std::size_t d = 0; d < mean.size(); ++d) {
        const double diff = x[d] - mean[d];
        lp -= 0.5 * (diff * diff / var[d] + std::log(var[d]) + kLog2Pi);
    }
    return lp;
}

} // namespace detail

// Builds the per-class target mixtures for a prompt set. Class-level prompts
// need the prior (they only select classes); entity-level prompts are
// self-sufficient. Every prompted class must be covered.
inline std::map<std::uint16_t, ClassMixture> target_mixtures(const PromptSet& prompts,
                                                             const FoundationPrior* prior) {
    std::map<std::uint16_t, ClassMixture> targets;
    if (prompts.mode == PromptMode::ClassLevel) {
        if (prior == nullptr)
            fail("class-level prompts need a foundation prior to synthesize from");
        for (const auto& p : prompts.class_prompts)
            targets[p.class_id] = prior->resolve(p.descriptor);
    } else {
        for (const auto& p : prompts.entity_prompts)
            targets[p.class_id] = detail::mixture_from_clusters(p.clusters);
    }
    return targets;
}

// Splits total_samples across the prompted classes proportionally to their
// prompt counts (largest remainder, ties to the lower class id). Every
// prompted class gets at least one sample.
inline std::map<std::uint16_t, std::size_t> allocate_synth_counts(const PromptSet& prompts,
                                                                  std::size_t total_samples) {
    const auto counts = prompts.class_counts();
    if (counts.empty()) fail("allocate_synth_counts: prompt set is empty");
    if (total_samples < counts.size())
        fail("allocate_synth_counts: %zu samples cannot cover %zu classes", total_samples,
             counts.size());
    double total = 0.0;
    for (const auto& [cls, n] : counts) total += static_cast<double>(n);

    const std::size_t spare = total_samples - counts.size();
    std::map<std::uint16_t, std::size_t> alloc;
    std::vector<std::pair<double, std::uint16_t>> rema; // (-remainder, class) for sorting
    std::size_t assigned = 0;
    for (const auto& [cls, n] : counts) {
        const double share = static_cast<double>(spare) * static_cast<double>(n) / total;
        const std::size_t base = static_cast<std::size_t>(share);
        alloc[cls] = 1 + base;
        assigned += base;
        rema.push_back({-(share - static_cast<double>(base)), cls});
    }
    std::sort(rema.begin(), rema.end());
    for (std::size_t i = 0; i < spare - assigned; ++i) alloc[rema[i].second]++;
    return alloc;
}

// ---------------------------------------------------------------------------
// Synthesis methods
// ---------------------------------------------------------------------------

struct SyntheticDataset {
    LabeledDataset data;
    std::string method; // "direct" | "diffusion" | "gan"
    std::uint64_t seed = 0;
    std::map<std::uint16_t, std::size_t> per_class;
};

namespace detail {

struct SynthPlan {
    std::map<std::uint16_t, ClassMixture> targets;
    std::map<std::uint16_t, std::size_t> alloc;
    std::size_t dim;
    std::size_t num_classes;
    std::size_t total;
};

inline SynthPlan make_plan(const PromptSet& prompts, const FoundationPrior* prior,
                           std::size_t total_samples) {
    SynthPlan plan;
    plan.targets = target_mixtures(prompts, prior);
    plan.alloc = allocate_synth_counts(prompts, total_samples);
    plan.dim = plan.targets.begin()->second.means.front().size();
    std::uint16_t max_cls = 0;
    for (const auto& [cls, mix] : plan.targets) {
        max_cls = std::max(max_cls, cls);
        for (const auto& m : mix.means)
            if (m.size() != plan.dim)
                fail("target mixtures disagree on dimension (%zu vs %zu)", m.size(), plan.dim);
    }
    plan.num_classes = static_cast<std::size_t>(max_cls) + 1;
    plan.total = 0;
    for (const auto& [cls, n] : plan.alloc) plan.total += n;
    return plan;
}

inline SyntheticDataset finish_synth(const SynthPlan& plan, Tensor features,
                                     std::vector<int> labels, const char* method,
                                     std::uint64_t seed) {
    SyntheticDataset out;
    out.data.features = std::move(features);
    out.data.labels = std::move(labels);
    out.data.num_classes = plan.num_classes;
    out.data.class_names = default_class_names(plan.num_classes);
    out.data.validate();
    out.method = method;
    out.seed = seed;
    out.per_class = plan.alloc;
    return out;
}

} // namespace detail

// Draws samples straight from the target mixtures. This is the synthesis
// ceiling the generative samplers are judged against.
inline SyntheticDataset synth_direct(const PromptSet& prompts, const FoundationPrior* prior,
                                     std::size_t total_samples, std::uint64_t seed) {
    const auto plan = detail::make_plan(prompts, prior, total_samples);
    Tensor features = Tensor::zeros({plan.total, plan.dim});
    std::vector<int> labels(plan.total);
    std::size_t row = 0;
    for (const auto& [cls, n] : plan.alloc) {
        Rng rng(derive_seed(seed, seed_salt::kSynth, cls));
        const auto& mix = plan.targets.at(cls);
        for (std::size_t i = 0; i < n; ++i, ++row) {
            detail::sample_mixture(mix, rng, &features.values[row * plan.dim], plan.dim);
            labels[row] = static_cast<int>(cls);
        }
    }
    return detail::finish_synth(plan, std::move(features), std::move(labels), "direct", seed);
}

struct DiffusionConfig {
    std::size_t steps = 250;
    double beta_start = 1e-4;
    double beta_end = 0.05;
    // Scales the noise injected per reverse step: near 0 is almost
    // deterministic (sharp, low diversity), near 1 the full ancestral sampler.
    double noise_scale = 0.95;

    void validate() const {
        if (steps == 0) fail_config("diffusion: steps must be >= 1");
        if (!(beta_start > 0.0) || !(beta_end >= beta_start) || !(beta_end < 1.0))
            fail_config("diffusion: need 0 < beta_start <= beta_end < 1");
        if (!(noise_scale > 0.0) || !(noise_scale < 1.0))
            fail_config("diffusion: noise_scale must be in (0, 1)");
    }
};

namespace detail {

struct NoiseSchedule {
    std::vector<double> beta;      // beta[t-1] for t = 1..T
    std::vector<double> alpha_bar; // cumulative product of (1 - beta)
};

inline NoiseSchedule make_schedule(const DiffusionConfig& cfg) {
    NoiseSchedule s;
    s.beta.resize(cfg.steps);
    s.alpha_bar.resize(cfg.steps);
    double prod = 1.0;
    for (std::size_t t = 0; t < cfg.steps; ++t) {
        s.beta[t] = cfg.steps == 1 ? cfg.beta_start
                                   : cfg.beta_start + (cfg.beta_end - cfg.beta_start) *
                                                          static_cast<double>(t) /
                                                          static_cast<double>(cfg.steps - 1);
        prod *= 1.0 - s.beta[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

// Score of the diffused mixture at time t. Diffusing x0 ~ N(mu, v) gives
// x_t ~ N(sqrt(abar) mu, abar v + 1 - abar); the score is the responsibility
// weighted pull toward each component mean.
inline void mixture_score(const ClassMixture& mix, double abar, const double* x,
                          std::size_t dim, double* score) {
    const std::size_t k = mix.components();
    const double sqrt_abar = std::sqrt(abar);
    std::vector<double> logp(k);
    std::vector<std::vector<double>> means(k), vars(k);
    for (std::size_t j = 0; j < k; ++j) {
        means[j].resize(dim);
        vars[j].resize(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            means[j][d] = sqrt_abar * mix.means[j][d];
            vars[j][d] = abar * mix.vars[j][d] + (1.0 - abar);
        }
        logp[j] = std::log(mix.weights[j]) + log_gaussian(x, means[j], vars[j]);
    }
    const double lmax = *std::max_element(logp.begin(), logp.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(logp[j] - lmax);
    std::fill(score, score + dim, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        const double resp = std::exp(logp[j] - lmax) / denom;
        for (std::size_t d = 0; d < dim; ++d)
            score[d] += resp * (means[j][d] - x[d]) / vars[j][d];
    }
}

inline void diffusion_sample(const ClassMixture& mix, const NoiseSchedule& sched,
                             double noise_scale, Rng& rng, double* out, std::size_t dim) {
    const std::size_t T = sched.beta.size();
    std::vector<double> x(dim), score(dim);
    for (auto& v : x) v = rng.gaussian();
    for (std::size_t t = T; t >= 1; --t) {
        const double beta = sched.beta[t - 1];
        const double abar = sched.alpha_bar[t - 1];
        const double abar_prev = t >= 2 ? sched.alpha_bar[t - 2] : 1.0;
        mixture_score(mix, abar, x.data(), dim, score.data());
        const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
        for (std::size_t d = 0; d < dim; ++d) x[d] = inv_sqrt_alpha * (x[d] + beta * score[d]);
        if (t > 1) {
            const double var = (1.0 - abar_prev) / (1.0 - abar) * beta;
            const double sigma = noise_scale * std::sqrt(var);
            for (std::size_t d = 0; d < dim; ++d) x[d] += sigma * rng.gaussian();
        }
    }
    std::copy(x.begin(), x.end(), out);
}

} // namespace detail

// Ancestral sampling against the analytic score of the target mixture. Each
// sample starts from isotropic noise and walks the reverse chain.
inline SyntheticDataset synth_diffusion(const PromptSet& prompts, const FoundationPrior* prior,
                                        std::size_t total_samples, const DiffusionConfig& cfg,
                                        std::uint64_t seed) {
    cfg.validate();
    const auto plan = detail::make_plan(prompts, prior, total_samples);
    const auto sched = detail::make_schedule(cfg);
    Tensor features = Tensor::zeros({plan.total, plan.dim});
    std::vector<int> labels(plan.total);
    std::size_t row = 0;
    for (const auto& [cls, n] : plan.alloc) {
        Rng rng(derive_seed(seed, seed_salt::kSynth, cls));
        const auto& mix = plan.targets.at(cls);
        for (std::size_t i = 0; i < n; ++i, ++row) {
            detail::diffusion_sample(mix, sched, cfg.noise_scale, rng,
                                     &features.values[row * plan.dim], plan.dim);
            labels[row] = static_cast<int>(cls);
        }
    }
    return detail::finish_synth(plan, std::move(features), std::move(labels), "diffusion", seed);
}

// ---------------------------------------------------------------------------
// Toy conditional GAN
// ---------------------------------------------------------------------------

struct GanConfig {
    std::size_t latent_dim = 4;
    std::size_t hidden = 32;
    std::size_t steps = 2000;
    std::size_t batch = 64;
    double lr = 0.05;
    // Weight on the discriminator objective in the two-player game; scales
    // the discriminator's gradient. Zero freezes the discriminator.
    double disc_weight = 1.0;
    // Offsets the training stream so several GAN runs under one synthesis
    // seed stay distinct.
    std::uint64_t seed = 0;

    void validate() const {
        if (latent_dim == 0 || hidden == 0 || steps == 0 || batch == 0)
            fail_config("gan: latent_dim, hidden, steps, batch must be >= 1");
        if (!(lr > 0.0)) fail_config("gan: lr must be > 0");
        if (!(disc_weight >= 0.0)) fail_config("gan: disc_weight must be >= 0");
    }
};

namespace detail {

// Minimal two-layer perceptron with manual backprop, enough for the toy GAN.
struct Mlp {
    std::size_t in, hidden, out;
    std::vector<double> w1, b1, w2, b2; // w1[h][in], w2[o][h]

    Mlp(std::size_t in_, std::size_t hidden_, std::size_t out_, Rng& rng)
        : in(in_), hidden(hidden_), out(out_) {
        const double s1 = std::sqrt(6.0 / static_cast<double>(in + hidden));
        const double s2 = std::sqrt(6.0 / static_cast<double>(hidden + out));
        w1.resize(hidden * in);
        b1.assign(hidden, 0.0);
        w2.resize(out * hidden);
        b2.assign(out, 0.0);
        for (auto& v : w1) v = rng.uniform(-s1, s1);
        for (auto& v : w2) v = rng.uniform(-s2, s2);
    }

    struct Trace {
        std::vector<double> input, pre, act, output; // batch-major
        std::size_t batch;
    };

    Trace forward(const std::vector<double>& input, std::size_t batch) const {
        Trace t;
        t.batch = batch;
        t.input = input;
        t.pre.assign(batch * hidden, 0.0);
        t.act.assign(batch * hidden, 0.0);
        t.output.assign(batch * out, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t h = 0; h < hidden; ++h) {
                double acc = b1[h];
                for (std::size_t i = 0; i < in; ++i) acc += w1[h * in + i] * input[b * in + i];
                t.pre[b * hidden + h] = acc;
                t.act[b * hidden + h] = acc > 0.0 ? acc : 0.0;
            }
            for (std::size_t o = 0; o < out; ++o) {
                double acc = b2[o];
                for (std::size_t h = 0; h < hidden; ++h)
                    acc += w2[o * hidden + h] * t.act[b * hidden + h];
                t.output[b * out + o] = acc;
            }
        }
        return t;
    }

    struct Grads {
        std::vector<double> w1, b1, w2, b2;
    };

    // dout is dL/d(output); returns dL/d(input) and accumulates into grads.
    std::vector<double> backward(const Trace& t, const std::vector<double>& dout,
                                 Grads& g) const {
        if (g.w1.empty()) {
            g.w1.assign(w1.size(), 0.0);
            g.b1.assign(b1.size(), 0.0);
            g.w2.assign(w2.size(), 0.0);
            g.b2.assign(b2.size(), 0.0);
        }
        std::vector<double> dinput(t.batch * in, 0.0);
        std::vector<double> dact(hidden);
        for (std::size_t b = 0; b < t.batch; ++b) {
            std::fill(dact.begin(), dact.end(), 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = dout[b * out + o];
                g.b2[o] += d;
                for (std::size_t h = 0; h < hidden; ++h) {
                    g.w2[o * hidden + h] += d * t.act[b * hidden + h];
                    dact[h] += d * w2[o * hidden + h];
                }
            }
            for (std::size_t h = 0; h < hidden; ++h) {
                const double d = t.pre[b * hidden + h] > 0.0 ? dact[h] : 0.0;
                g.b1[h] += d;
                for (std::size_t i = 0; i < in; ++i) {
                    g.w1[h * in + i] += d * t.input[b * in + i];
                    dinput[b * in + i] += d * w1[h * in + i];
                }
            }
        }
        return dinput;
    }

    void apply(const Grads& g, double lr) {
        for (std::size_t i = 0; i < w1.size(); ++i) w1[i] -= lr * g.w1[i];
        for (std::size_t i = 0; i < b1.size(); ++i) b1[i] -= lr * g.b1[i];
        for (std::size_t i = 0; i < w2.size(); ++i) w2[i] -= lr * g.w2[i];
        for (std::size_t i = 0; i < b2.size(); ++i) b2[i] -= lr * g.b2[i];
    }
};

inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace detail

struct GanRun {
    detail::Mlp generator;
    std::size_t latent_dim;
    std::size_t num_classes;
    std::size_t dim;
    std::vector<double> disc_loss; // per training step
    std::vector<double> gen_loss;
};

// Trains a conditional GAN against samples from the target mixtures. The
// discriminator loss sits at 2 ln 2 when the generator has it fooled.
inline GanRun train_gan(const std::map<std::uint16_t, ClassMixture>& targets,
                        const GanConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (targets.empty()) fail("train_gan: no target mixtures");
    const std::size_t dim = targets.begin()->second.means.front().size();
    std::vector<std::uint16_t> class_ids;
    for (const auto& [cls, mix] : targets) class_ids.push_back(cls);
    const std::size_t num_classes = class_ids.size();

    Rng rng(derive_seed(seed, seed_salt::kSynth, 0x6A, cfg.seed)); // GAN stream
    detail::Mlp gen(cfg.latent_dim + num_classes, cfg.hidden, dim, rng);
    detail::Mlp disc(dim + num_classes, cfg.hidden, 1, rng);

    GanRun run{std::move(gen), cfg.latent_dim, num_classes, dim, {}, {}};
    const std::size_t B = cfg.batch;
    std::vector<double> gin(B * (cfg.latent_dim + num_classes));
    std::vector<double> din(B * (dim + num_classes));
    std::vector<std::size_t> batch_cls(B);

    auto fill_gen_input = [&] {
        std::fill(gin.begin(), gin.end(), 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            batch_cls[b] = static_cast<std::size_t>(rng.below(num_classes));
            for (std::size_t z = 0; z < cfg.latent_dim; ++z)
                gin[b * (cfg.latent_dim + num_classes) + z] = rng.gaussian();
            gin[b * (cfg.latent_dim + num_classes) + cfg.latent_dim + batch_cls[b]] = 1.0;
        }
    };
    auto fill_disc_input = [&](const std::vector<double>& x) {
        std::fill(din.begin(), din.end(), 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t d = 0; d < dim; ++d) din[b * (dim + num_classes) + d] = x[b * dim + d];
            din[b * (dim + num_classes) + dim + batch_cls[b]] = 1.0;
        }
    };

    std::vector<double> real(B * dim);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        // Discriminator pass: real up, fake down.
        fill_gen_input();
        const auto gtrace = run.generator.forward(gin, B);
        for (std::size_t b = 0; b < B; ++b)
            detail::sample_mixture(targets.at(class_ids[batch_cls[b]]), rng, &real[b * dim], dim);

        fill_disc_input(real);
        const auto dreal = disc.forward(din, B);
        fill_disc_input(gtrace.output);
        const auto dfake = disc.forward(din, B);

        double dloss = 0.0;
        std::vector<double> dlog_real(B), dlog_fake(B);
        for (std::size_t b = 0; b < B; ++b) {
            dloss += detail::softplus(-dreal.output[b]) + detail::softplus(dfake.output[b]);
            dlog_real[b] = -detail::sigmoid(-dreal.output[b]) / static_cast<double>(B);
            dlog_fake[b] = detail::sigmoid(dfake.output[b]) / static_cast<double>(B);
        }
        dloss /= static_cast<double>(B);
        run.disc_loss.push_back(dloss);

        detail::Mlp::Grads dgrads;
        disc.backward(dreal, dlog_real, dgrads);
        disc.backward(dfake, dlog_fake, dgrads);
        disc.apply(dgrads, cfg.lr * cfg.disc_weight);

        // Generator pass against the updated discriminator.
        fill_gen_input();
        const auto gtrace2 = run.generator.forward(gin, B);
        fill_disc_input(gtrace2.output);
        const auto dfake2 = disc.forward(din, B);
        double gloss = 0.0;
        std::vector<double> dlog(B);
        for (std::size_t b = 0; b < B; ++b) {
            gloss += detail::softplus(-dfake2.output[b]);
            dlog[b] = -detail::sigmoid(-dfake2.output[b]) / static_cast<double>(B);
        }
        gloss /= static_cast<double>(B);
        run.gen_loss.push_back(gloss);
        if (!std::isfinite(dloss) || !std::isfinite(gloss))
            fail("gan training diverged at iteration %zu (non-finite loss)", step);

        detail::Mlp::Grads scratch;
        const auto dx_full = disc.backward(dfake2, dlog, scratch);
        std::vector<double> dx(B * dim);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t d = 0; d < dim; ++d)
                dx[b * dim + d] = dx_full[b * (dim + num_classes) + d];
        detail::Mlp::Grads ggrads;
        run.generator.backward(gtrace2, dx, ggrads);
        run.generator.apply(ggrads, cfg.lr);
    }
    return run;
}

// Samples the trained generator, conditioning on each class in turn.
inline SyntheticDataset synth_gan(const PromptSet& prompts, const FoundationPrior* prior,
                                  std::size_t total_samples, const GanConfig& cfg,
                                  std::uint64_t seed) {
    const auto plan = detail::make_plan(prompts, prior, total_samples);
    auto run = train_gan(plan.targets, cfg, seed);

    std::vector<std::uint16_t> class_ids;
    for (const auto& [cls, mix] : plan.targets) class_ids.push_back(cls);
    std::map<std::uint16_t, std::size_t> class_slot;
    for (std::size_t i = 0; i < class_ids.size(); ++i) class_slot[class_ids[i]] = i;

    Tensor features = Tensor::zeros({plan.total, plan.dim});
    std::vector<int> labels(plan.total);
    const std::size_t gin_dim = run.latent_dim + run.num_classes;
    std::size_t row = 0;
    for (const auto& [cls, n] : plan.alloc) {
        Rng rng(derive_seed(seed, seed_salt::kSynth, cls, 0x6B)); // sampling stream
        std::vector<double> gin(gin_dim, 0.0);
        for (std::size_t i = 0; i < n; ++i, ++row) {
            std::fill(gin.begin(), gin.end(), 0.0);
            for (std::size_t z = 0; z < run.latent_dim; ++z) gin[z] = rng.gaussian();
            gin[run.latent_dim + class_slot.at(cls)] = 1.0;
            const auto t = run.generator.forward(gin, 1);
            std::copy(t.output.begin(), t.output.end(), &features.values[row * plan.dim]);
            labels[row] = static_cast<int>(cls);
        }
    }
    return detail::finish_synth(plan, std::move(features), std::move(labels), "gan", seed);
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

// Writes the samples (CSV for flat features, IDX pair for image tensors) plus
// a JSON sidecar describing how they were made.
inline std::vector<std::string> export_synthetic(const SyntheticDataset& synth,
                                                 const std::string& dir,
                                                 const std::string& basename) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> written;

    nlohmann::json side;
    side["method"] = synth.method;
    side["seed"] = synth.seed;
    side["samples"] = synth.data.labels.size();
    side["num_classes"] = synth.data.num_classes;
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [cls, n] : synth.per_class) per_class[std::to_string(cls)] = n;
    side["per_class"] = std::move(per_class);

    if (synth.data.features.rank() == 2) {
        const std::string path = (fs::path(dir) / (basename + ".csv")).string();
        save_csv(synth.data, path);
        side["format"] = "csv";
        side["files"] = {basename + ".csv"};
        written.push_back(path);
    } else if (synth.data.features.rank() == 4) {
        const std::string images = (fs::path(dir) / (basename + "-images.idx")).string();
        const std::string labels = (fs::path(dir) / (basename + "-labels.idx")).string();
        write_idx(synth.data, images, labels);
        side["format"] = "idx";
        side["files"] = {basename + "-images.idx", basename + "-labels.idx"};
        written.push_back(images);
        written.push_back(labels);
    } else {
        fail("export_synthetic: unsupported feature rank %zu", synth.data.features.rank());
    }

    const std::string side_path = (fs::path(dir) / (basename + ".json")).string();
    std::ofstream out(side_path, std::ios::binary);
    if (!out) fail("cannot write %s", side_path.c_str());
    out << side.dump(2) << "\n";
    written.push_back(side_path);
    return written;
}

} // namespace fgl
