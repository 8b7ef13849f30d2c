// SPDX-License-Identifier: Apache-2.0
#include "vapi/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace vapi {

namespace {

constexpr double kTwoPi = 6.283185307179586477;

// Streaming log-sum-exp; accumulation order follows insertion order.
class LogSumExp {
public:
    void push(double x) {
        if (x > max_) {
            sum_ = sum_ * std::exp(max_ - x) + 1.0;
            max_ = x;
        } else {
            sum_ += std::exp(x - max_);
        }
    }
    double value() const { return max_ + std::log(sum_); }

private:
    double max_ = -std::numeric_limits<double>::infinity();
    double sum_ = 0.0;
};

double categorical_kl(const std::vector<double>& p, const std::vector<double>& q) {
    double kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) throw std::runtime_error("absolute continuity violated");
        kl += p[i] * (std::log(p[i]) - std::log(q[i]));
    }
    return kl;
}

std::vector<double> softmax_row_values(const Tensor& logits, int row) {
    const int k = logits.dim(1);
    std::vector<double> out(static_cast<size_t>(k));
    double mx = logits.at(row, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, logits.at(row, j));
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
        out[static_cast<size_t>(j)] = std::exp(logits.at(row, j) - mx);
        z += out[static_cast<size_t>(j)];
    }
    for (double& v : out) v /= z;
    return out;
}

}  // namespace

double pixel_loglik(const Tensor& image, const Tensor& decoded, double sigma) {
    if (sigma <= 0.0) throw std::runtime_error("sigma must be positive");
    if (image.shape() != decoded.shape()) throw std::runtime_error("shape mismatch");
    double sq = 0.0;
    const auto& a = image.data();
    const auto& b = decoded.data();
    for (size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    const double p = static_cast<double>(a.size());
    return -sq / (2.0 * sigma * sigma) - 0.5 * p * std::log(kTwoPi * sigma * sigma);
}

double SequenceLaw::log_prob(const TokenSeq& x) const {
    double lp = 0.0;
    TokenSeq prefix;
    prefix.reserve(x.size());
    for (int tok : x) {
        const std::vector<double> c = conditional(prefix);
        if (c[static_cast<size_t>(tok)] <= 0.0)
            return -std::numeric_limits<double>::infinity();
        lp += std::log(c[static_cast<size_t>(tok)]);
        prefix.push_back(tok);
    }
    return lp;
}

std::vector<double> ArLaw::conditional(const TokenSeq& prefix) const {
    NoGradGuard guard;
    Tensor logits = model_->next_token_logits(label_, prefix);
    std::vector<double> out(logits.data());
    double mx = out[0];
    for (double v : out) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : out) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : out) v /= z;
    return out;
}

double ArLaw::log_prob(const TokenSeq& x) const {
    NoGradGuard guard;
    Tensor logits = model_->forward_logits(label_, x);
    const auto lps = row_log_probs(logits, x);
    double total = 0.0;
    for (double lp : lps) total += lp;
    return total;
}

KlChainResult kl_chain_check(const SequenceLaw& p, const SequenceLaw& q) {
    if (p.vocab() != q.vocab() || p.length() != q.length())
        throw std::runtime_error("shape mismatch");
    const int k = p.vocab();
    const int n = p.length();
    if (!enumerable(k, n)) throw std::runtime_error("not enumerable");

    // Route 1: joint enumeration over complete sequences.
    double joint = 0.0;
    TokenSeq x(static_cast<size_t>(n), 0);
    while (true) {
        const double lp = p.log_prob(x);
        const double lq = q.log_prob(x);
        const double px = std::exp(lp);
        if (px > 0.0) {
            if (!std::isfinite(lq)) throw std::runtime_error("absolute continuity violated");
            joint += px * (lp - lq);
        }
        int pos = n - 1;
        while (pos >= 0 && ++x[static_cast<size_t>(pos)] == k) {
            x[static_cast<size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }

    // Route 2: chained per-position expectation over prefixes drawn from P.
    double chained = 0.0;
    struct Frame {
        TokenSeq prefix;
        double prob;
    };
    std::vector<Frame> stack;
    stack.push_back({TokenSeq{}, 1.0});
    while (!stack.empty()) {
        Frame f = std::move(stack.back());
        stack.pop_back();
        const std::vector<double> pc = p.conditional(f.prefix);
        const std::vector<double> qc = q.conditional(f.prefix);
        chained += f.prob * categorical_kl(pc, qc);
        if (static_cast<int>(f.prefix.size()) + 1 < n) {
            for (int tok = k - 1; tok >= 0; --tok) {
                if (pc[static_cast<size_t>(tok)] <= 0.0) continue;
                Frame child;
                child.prefix = f.prefix;
                child.prefix.push_back(tok);
                child.prob = f.prob * pc[static_cast<size_t>(tok)];
                stack.push_back(std::move(child));
            }
        }
    }

    KlChainResult out;
    out.joint_kl = joint;
    out.chained_kl = chained;
    out.abs_diff = std::abs(joint - chained);
    return out;
}

bool enumerable(int vocab, int seq_len) {
    return seq_len * std::log(static_cast<double>(vocab)) <= std::log(1e6) + 1e-12;
}

std::vector<double> enumerate_sequence_log_probs(const ArModel& ar, int label) {
    const int k = ar.config().vocab;
    const int n = ar.config().seq_len;
    if (!enumerable(k, n)) throw std::runtime_error("not enumerable");
    ArLaw law(ar, label);
    std::vector<double> out;
    TokenSeq x(static_cast<size_t>(n), 0);
    while (true) {
        out.push_back(law.log_prob(x));
        int pos = n - 1;
        while (pos >= 0 && ++x[static_cast<size_t>(pos)] == k) {
            x[static_cast<size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return out;
}

double exact_log_marginal(const ArModel& ar, const Tokenizer& tok,
                          const ImageSample& sample, double sigma,
                          bool reversed_order) {
    NoGradGuard guard;
    const int k = ar.config().vocab;
    const int n = ar.config().seq_len;
    if (k != tok.config().codebook_size || n != tok.config().seq_len())
        throw std::runtime_error("shape mismatch");
    if (!enumerable(k, n)) throw std::runtime_error("not enumerable");
    ArLaw law(ar, sample.label);
    LogSumExp lse;
    TokenSeq digits(static_cast<size_t>(n), 0);
    while (true) {
        TokenSeq x = digits;
        if (reversed_order) std::reverse(x.begin(), x.end());
        const double lp = law.log_prob(x);
        const double ll = pixel_loglik(sample.image, tok.decode(x), sigma);
        lse.push(lp + ll);
        int pos = n - 1;
        while (pos >= 0 && ++digits[static_cast<size_t>(pos)] == k) {
            digits[static_cast<size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return lse.value();
}

ElboReport elbo_estimate(const ArModel& ar, const Tokenizer& tok,
                         const ImageSample& sample, double sigma, int num_mc,
                         SeededRng& rng, bool with_exact) {
    if (num_mc < 1) throw std::runtime_error("num_mc must be >= 1");
    NoGradGuard guard;
    const int n = ar.config().seq_len;

    const TokenSeq x_star = tok.tokenize(sample.image);
    const Tensor q_logits = ar.teacher_forced_dist(sample.label, x_star);
    std::vector<std::vector<double>> q_rows(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) q_rows[static_cast<size_t>(t)] = softmax_row_values(q_logits, t);

    double recon_sum = 0.0;
    double kl_sum = 0.0;
    for (int m = 0; m < num_mc; ++m) {
        TokenSeq x(static_cast<size_t>(n), 0);
        for (int t = 0; t < n; ++t)
            x[static_cast<size_t>(t)] = categorical_sample(q_rows[static_cast<size_t>(t)], rng);
        recon_sum += pixel_loglik(sample.image, tok.decode(x), sigma);

        // free-running conditionals along the sampled prefix, one causal pass
        const Tensor pi_logits = ar.forward_logits(sample.label, x);
        for (int t = 0; t < n; ++t) {
            const std::vector<double> pi_row = softmax_row_values(pi_logits, t);
            kl_sum += categorical_kl(q_rows[static_cast<size_t>(t)], pi_row);
        }
    }

    ElboReport rep;
    rep.recon = recon_sum / num_mc;
    rep.kl = kl_sum / num_mc;
    rep.elbo = rep.recon - rep.kl;
    if (with_exact) {
        rep.exact_log_marginal = exact_log_marginal(ar, tok, sample, sigma);
        rep.slack = rep.exact_log_marginal - rep.elbo;
        rep.has_exact = true;
    }
    return rep;
}

double exposure_bias_estimate(const ArModel& ar, const Tokenizer& tok,
                              const std::vector<ImageSample>& data,
                              int num_prefix_mc, SeededRng& rng, int max_images) {
    if (data.empty()) throw std::runtime_error("empty dataset");
    NoGradGuard guard;
    const int n = ar.config().seq_len;
    size_t stride = 1;
    size_t use = data.size();
    if (max_images > 0 && static_cast<size_t>(max_images) < data.size()) {
        use = static_cast<size_t>(max_images);
        stride = data.size() / use;
    }
    double total = 0.0;
    int64_t count = 0;
    for (size_t i = 0; i < use; ++i) {
        const ImageSample& s = data[i * stride];
        const TokenSeq x_star = tok.tokenize(s.image);
        const Tensor q_logits = ar.teacher_forced_dist(s.label, x_star);
        std::vector<std::vector<double>> q_rows(static_cast<size_t>(n));
        for (int t = 0; t < n; ++t)
            q_rows[static_cast<size_t>(t)] = softmax_row_values(q_logits, t);
        for (int m = 0; m < num_prefix_mc; ++m) {
            TokenSeq x(static_cast<size_t>(n), 0);
            for (int t = 0; t < n; ++t)
                x[static_cast<size_t>(t)] =
                    categorical_sample(q_rows[static_cast<size_t>(t)], rng);
            const Tensor pi_logits = ar.forward_logits(s.label, x);
            for (int t = 0; t < n; ++t)
                total += categorical_kl(q_rows[static_cast<size_t>(t)],
                                        softmax_row_values(pi_logits, t));
            ++count;
        }
    }
    return total / (static_cast<double>(count) * n);
}

FeatureStats fit_feature_stats(const std::vector<Tensor>& images,
                               const FeatureBank& bank) {
    if (images.size() < 2) throw std::runtime_error("need at least two images");
    const size_t n = images.size();
    std::vector<std::vector<double>> feats;
    feats.reserve(n);
    for (const Tensor& img : images) feats.push_back(bank.pooled(img));
    const size_t d = feats[0].size();

    FeatureStats st;
    st.mean.assign(d, 0.0);
    for (const auto& f : feats)
        for (size_t j = 0; j < d; ++j) st.mean[j] += f[j];
    for (double& m : st.mean) m /= static_cast<double>(n);

    st.cov.assign(d * d, 0.0);
    for (const auto& f : feats)
        for (size_t a = 0; a < d; ++a)
            for (size_t b = 0; b < d; ++b)
                st.cov[a * d + b] += (f[a] - st.mean[a]) * (f[b] - st.mean[b]);
    for (double& c : st.cov) c /= static_cast<double>(n - 1);
    return st;
}

void jacobi_eigen_sym(const std::vector<double>& a_in, int n,
                      std::vector<double>& eigvals, std::vector<double>& eigvecs) {
    std::vector<double> a(a_in);
    eigvecs.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[static_cast<size_t>(i) * n + i] = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q)
                off += a[static_cast<size_t>(p) * n + q] * a[static_cast<size_t>(p) * n + q];
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[static_cast<size_t>(p) * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[static_cast<size_t>(p) * n + p];
                const double aqq = a[static_cast<size_t>(q) * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a[static_cast<size_t>(i) * n + p];
                    const double aiq = a[static_cast<size_t>(i) * n + q];
                    a[static_cast<size_t>(i) * n + p] = c * aip - s * aiq;
                    a[static_cast<size_t>(i) * n + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a[static_cast<size_t>(p) * n + i];
                    const double aqi = a[static_cast<size_t>(q) * n + i];
                    a[static_cast<size_t>(p) * n + i] = c * api - s * aqi;
                    a[static_cast<size_t>(q) * n + i] = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = eigvecs[static_cast<size_t>(i) * n + p];
                    const double viq = eigvecs[static_cast<size_t>(i) * n + q];
                    eigvecs[static_cast<size_t>(i) * n + p] = c * vip - s * viq;
                    eigvecs[static_cast<size_t>(i) * n + q] = s * vip + c * viq;
                }
            }
    }
    eigvals.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) eigvals[static_cast<size_t>(i)] = a[static_cast<size_t>(i) * n + i];
}

namespace {

// V diag(sqrt(max(lambda,0))) V^T
std::vector<double> sym_sqrt(const std::vector<double>& m, int n) {
    std::vector<double> w, v;
    jacobi_eigen_sym(m, n, w, v);
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        const double s = std::sqrt(std::max(0.0, w[static_cast<size_t>(k)]));
        if (s == 0.0) continue;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] +=
                    s * v[static_cast<size_t>(i) * n + k] * v[static_cast<size_t>(j) * n + k];
    }
    return out;
}

std::vector<double> mat_mul(const std::vector<double>& a, const std::vector<double>& b,
                            int n) {
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double aik = a[static_cast<size_t>(i) * n + k];
            if (aik == 0.0) continue;
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] += aik * b[static_cast<size_t>(k) * n + j];
        }
    return out;
}

}  // namespace

double toy_fid(const std::vector<Tensor>& real_images,
               const std::vector<Tensor>& generated_images,
               const FeatureBank& bank) {
    if (real_images.size() < 64 || generated_images.size() < 64)
        throw std::runtime_error("toy_fid needs at least 64 images per set");
    FeatureStats s1 = fit_feature_stats(real_images, bank);
    FeatureStats s2 = fit_feature_stats(generated_images, bank);
    const int n = static_cast<int>(s1.mean.size());

    // diagonal jitter guards rank-deficient covariances
    for (int i = 0; i < n; ++i) {
        s1.cov[static_cast<size_t>(i) * n + i] += 1e-6;
        s2.cov[static_cast<size_t>(i) * n + i] += 1e-6;
    }

    double mean_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = s1.mean[static_cast<size_t>(i)] - s2.mean[static_cast<size_t>(i)];
        mean_sq += d * d;
    }

    const std::vector<double> root1 = sym_sqrt(s1.cov, n);
    std::vector<double> inner = mat_mul(mat_mul(root1, s2.cov, n), root1, n);
    // symmetrize against round-off before the second decomposition
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (inner[static_cast<size_t>(i) * n + j] +
                                      inner[static_cast<size_t>(j) * n + i]);
            inner[static_cast<size_t>(i) * n + j] = avg;
            inner[static_cast<size_t>(j) * n + i] = avg;
        }
    std::vector<double> w, v;
    jacobi_eigen_sym(inner, n, w, v);
    double tr_sqrt = 0.0;
    for (double lam : w) tr_sqrt += std::sqrt(std::max(0.0, lam));

    double tr1 = 0.0, tr2 = 0.0;
    for (int i = 0; i < n; ++i) {
        tr1 += s1.cov[static_cast<size_t>(i) * n + i];
        tr2 += s2.cov[static_cast<size_t>(i) * n + i];
    }
    return mean_sq + tr1 + tr2 - 2.0 * tr_sqrt;
}

double recon_psnr(double mse_value) {
    if (mse_value < 0.0) throw std::runtime_error("negative mse");
    if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse_value);
}

int codebook_usage(const Tokenizer& tok, const std::vector<ImageSample>& data) {
    std::set<int> used;
    for (const ImageSample& s : data) {
        const TokenSeq t = tok.tokenize(s.image);
        used.insert(t.begin(), t.end());
    }
    return static_cast<int>(used.size());
}

}  // namespace vapi
