#include "corrlab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "corrlab/rng.hpp"
#include "json.hpp"

namespace corrlab {

namespace {

// Mode ordering helper: locate the partner index with opposite wavevector.
std::vector<std::size_t> conjugate_partner(const SpectralDecomposition& dec) {
    const std::size_t n = dec.n_modes();
    std::vector<std::size_t> partner(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<long> neg = dec.wavevectors[k];
        for (auto& v : neg) v = -v;
        for (std::size_t j = 0; j < n; ++j) {
            if (dec.wavevectors[j] == neg) {
                partner[k] = j;
                break;
            }
        }
    }
    return partner;
}

void require_symmetric_for_real(const SpectralDecomposition& dec,
                                const std::vector<std::size_t>& partner) {
    if (dec.domain.kind == DomainKind::interval_neumann_1d) return;
    for (std::size_t k = 0; k < partner.size(); ++k)
        if (partner[k] >= dec.n_modes())
            throw std::invalid_argument(
                "real noise needs a symmetric mode truncation (use odd mode counts)");
}

void fill_white_step(std::vector<cplx>& out, CounterRng& rng, double sigma, bool real_noise,
                     const SpectralDecomposition& dec, const std::vector<std::size_t>& partner) {
    const std::size_t n = out.size();
    if (!real_noise) {
        for (std::size_t k = 0; k < n; ++k) out[k] = sigma * rng.gaussian_complex();
        return;
    }
    if (dec.domain.kind == DomainKind::interval_neumann_1d) {
        // real basis: real coefficients
        for (std::size_t k = 0; k < n; ++k) out[k] = cplx(sigma * rng.gaussian(), 0.0);
        return;
    }
    // conjugate-symmetric coefficients give a real grid field
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t p = partner[k];
        if (p == k) {
            out[k] = cplx(sigma * rng.gaussian(), 0.0);
        } else if (k < p) {
            out[k] = sigma * rng.gaussian_complex();
            out[p] = std::conj(out[k]);
        }
    }
}

}  // namespace

std::vector<double> make_mode_multiplier(const SpectralDecomposition& dec, double epsilon,
                                         const std::function<double(double)>& l_of_xi) {
    if (dec.domain.axes() != 1) throw std::invalid_argument("make_mode_multiplier: 1D domains only");
    std::vector<double> m(dec.n_modes());
    const double L = dec.domain.extent[0];
    for (std::size_t k = 0; k < dec.n_modes(); ++k) {
        const double kappa = (dec.domain.kind == DomainKind::interval_neumann_1d)
                                 ? static_cast<double>(dec.wavevectors[k][0]) * kPi / L
                                 : kTwoPi * static_cast<double>(dec.wavevectors[k][0]) / L;
        m[k] = l_of_xi(epsilon * kappa);
    }
    return m;
}

std::vector<double> make_mode_multiplier_radial(const SpectralDecomposition& dec, double epsilon,
                                                const std::function<double(double)>& l_of_absxi) {
    std::vector<double> m(dec.n_modes());
    for (std::size_t k = 0; k < dec.n_modes(); ++k)
        m[k] = l_of_absxi(epsilon * std::sqrt(dec.eigenvalues[k]));
    return m;
}

std::vector<double> default_band_dispersion(const SpectralDecomposition& dec) {
    std::vector<double> v(dec.n_modes());
    for (std::size_t k = 0; k < dec.n_modes(); ++k) v[k] = std::sqrt(dec.eigenvalues[k]);
    return v;
}

SourceTrajectory sample_white_noise(const SpectralDecomposition& dec, double dt, std::size_t steps,
                                    std::uint64_t seed, std::uint64_t realization_index,
                                    bool real_noise) {
    if (dt <= 0.0) throw std::invalid_argument("sample_white_noise: dt must be > 0");
    if (steps < 1) throw std::invalid_argument("sample_white_noise: steps must be >= 1");
    SourceTrajectory s;
    s.dt = dt;
    s.steps = steps;
    s.seed = seed;
    s.realization_index = realization_index;
    s.dec = dec;
    s.mode_values.assign(steps, std::vector<cplx>(dec.n_modes()));

    const double sigma = 1.0 / std::sqrt(dt);  // mode-coefficient std; grid variance 1/(dt*cell)
    CounterRng rng(seed, realization_index);
    const auto partner = conjugate_partner(dec);
    if (real_noise) require_symmetric_for_real(dec, partner);
    for (std::size_t t = 0; t < steps; ++t)
        fill_white_step(s.mode_values[t], rng, sigma, real_noise, dec, partner);
    return s;
}

namespace {

// Per-mode stationary weight chi_I(nu_k) * l(xi_k); window handled separately.
std::vector<double> band_multiplier_weight(const NoiseSpec& spec, const SpectralDecomposition& dec) {
    const std::size_t n = dec.n_modes();
    std::vector<double> disp = spec.band_dispersion.empty() ? default_band_dispersion(dec)
                                                            : spec.band_dispersion;
    if (disp.size() != n) throw std::invalid_argument("band_dispersion size mismatch");
    std::vector<double> w(n, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        if (!spec.band.contains(disp[k])) w[k] = 0.0;
        if (!spec.mode_multiplier.empty()) {
            if (spec.mode_multiplier.size() != n)
                throw std::invalid_argument("mode_multiplier size mismatch");
            w[k] *= spec.mode_multiplier[k];
        }
    }
    return w;
}

}  // namespace

SourceTrajectory apply_filters(const SourceTrajectory& w, const NoiseSpec& spec) {
    const std::size_t n = w.dec.n_modes();
    if (spec.taps.empty()) throw std::invalid_argument("apply_filters: empty tap sequence");
    if (spec.taps.size() > w.steps)
        throw std::invalid_argument("apply_filters: tap filter longer than trajectory");
    if (spec.tap_dt != w.dt) throw std::invalid_argument("apply_filters: tap_dt != trajectory dt");

    const auto weight = band_multiplier_weight(spec, w.dec);
    const long ntap = static_cast<long>(spec.taps.size());
    const long center = (ntap - 1) / 2;

    SourceTrajectory out = w;
    for (std::size_t t = 0; t < w.steps; ++t) {
        auto& row = out.mode_values[t];
        std::fill(row.begin(), row.end(), cplx{0.0, 0.0});
        for (long j = 0; j < ntap; ++j) {
            const long src = static_cast<long>(t) - (j - center);
            if (src < 0 || src >= static_cast<long>(w.steps)) continue;  // zero padded
            const double c = spec.taps[static_cast<std::size_t>(j)] * w.dt;
            const auto& in = w.mode_values[static_cast<std::size_t>(src)];
            for (std::size_t k = 0; k < n; ++k) row[k] += c * in[k];
        }
        for (std::size_t k = 0; k < n; ++k) row[k] *= weight[k];
        if (!spec.spatial_window.empty()) {
            if (spec.spatial_window.size() != w.dec.domain.size())
                throw std::invalid_argument("spatial_window size mismatch");
            Field g = w.dec.to_grid(row);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= spec.spatial_window[i];
            row = w.dec.to_modes(g);
        }
    }
    return out;
}

CovarianceKernel covariance_kernel(const NoiseSpec& spec, const SpectralDecomposition& dec) {
    CovarianceKernel K;
    K.lag_dt = spec.tap_dt;
    const long ntap = static_cast<long>(spec.taps.size());
    K.half_lags = ntap - 1;
    K.psi.assign(static_cast<std::size_t>(2 * K.half_lags + 1), 0.0);
    for (long j = -K.half_lags; j <= K.half_lags; ++j) {
        double s = 0.0;
        for (long m = 0; m < ntap; ++m) {
            const long mj = m + j;
            if (mj < 0 || mj >= ntap) continue;
            s += spec.taps[static_cast<std::size_t>(mj)] * spec.taps[static_cast<std::size_t>(m)];
        }
        K.psi[static_cast<std::size_t>(j + K.half_lags)] = s * spec.tap_dt;
    }
    K.support_t0 = spec.support_t0();

    const auto weight = band_multiplier_weight(spec, dec);
    K.mode_weight.resize(weight.size());
    for (std::size_t k = 0; k < weight.size(); ++k) K.mode_weight[k] = weight[k] * weight[k];

    if (!spec.spatial_window.empty()) {
        // Dense mode-space matrix  T_w diag(|l|^2) T_w^*  with T_w the window
        // in the eigenbasis.
        const std::size_t n = dec.n_modes();
        const std::size_t ng = dec.domain.size();
        if (spec.spatial_window.size() != ng)
            throw std::invalid_argument("spatial_window size mismatch");
        // T[k][k'] = <e_k, w e_k'>
        std::vector<std::vector<cplx>> T(n, std::vector<cplx>(n));
        std::vector<std::vector<cplx>> basis(n, std::vector<cplx>(ng));
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t j = 0; j < ng; ++j) basis[k][j] = dec.basis_value(k, dec.domain.point(j));
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t kp = 0; kp < n; ++kp) {
                cplx s{0.0, 0.0};
                for (std::size_t j = 0; j < ng; ++j)
                    s += std::conj(basis[k][j]) * spec.spatial_window[j] * basis[kp][j];
                T[k][kp] = s * dec.domain.cell_volume;
            }
        K.dense.assign(n, std::vector<cplx>(n, cplx{0.0, 0.0}));
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t kp = 0; kp < n; ++kp) {
                cplx s{0.0, 0.0};
                for (std::size_t m = 0; m < n; ++m)
                    s += T[k][m] * (weight[m] * weight[m]) * std::conj(T[kp][m]);
                K.dense[k][kp] = s;
            }
    }
    return K;
}

// -------------------------------------------------------------------------
// Streams

namespace {

class WhiteStream final : public SourceStream {
  public:
    WhiteStream(const SpectralDecomposition& dec, double dt, std::uint64_t seed,
                std::uint64_t realization, bool real_noise)
        : dec_(&dec),
          sigma_(1.0 / std::sqrt(dt)),
          real_(real_noise),
          rng_(seed, realization),
          partner_(conjugate_partner(dec)) {
        if (real_) require_symmetric_for_real(dec, partner_);
    }

    void next(std::vector<cplx>& out) override {
        out.resize(dec_->n_modes());
        fill_white_step(out, rng_, sigma_, real_, *dec_, partner_);
    }
    std::size_t n_modes() const override { return dec_->n_modes(); }

  private:
    const SpectralDecomposition* dec_;
    double sigma_;
    bool real_;
    CounterRng rng_;
    std::vector<std::size_t> partner_;
};

class FilteredStream final : public SourceStream {
  public:
    FilteredStream(const SpectralDecomposition& dec, const NoiseSpec& spec, double dt,
                   std::uint64_t realization)
        : dec_(&dec),
          spec_(spec),
          white_(dec, dt, spec.seed, realization, spec.real_noise),
          dt_(dt),
          weight_(band_multiplier_weight(spec, dec)) {
        if (spec.tap_dt != dt) throw std::invalid_argument("filtered stream: tap_dt != dt");
        const long ntap = static_cast<long>(spec.taps.size());
        center_ = (ntap - 1) / 2;
        // Symmetric taps are non-causal; prefetch the future samples the
        // first outputs need.  Ring buffer holds the last ntap white steps.
        ring_.assign(static_cast<std::size_t>(ntap), std::vector<cplx>(dec.n_modes(), cplx{0, 0}));
        for (long j = 0; j < center_; ++j) advance_white();
        if (!spec.spatial_window.empty()) {
            if (spec.spatial_window.size() != dec.domain.size())
                throw std::invalid_argument("spatial_window size mismatch");
            const std::size_t ng = dec.domain.size();
            basis_.assign(dec.n_modes(), std::vector<cplx>(ng));
            for (std::size_t k = 0; k < dec.n_modes(); ++k)
                for (std::size_t jg = 0; jg < ng; ++jg)
                    basis_[k][jg] = dec.basis_value(k, dec.domain.point(jg));
        }
    }

    void next(std::vector<cplx>& out) override {
        advance_white();
        const std::size_t n = dec_->n_modes();
        const long ntap = static_cast<long>(spec_.taps.size());
        out.assign(n, cplx{0.0, 0.0});
        // out_t = sum_j taps[j] * dt * w_{t-(j-center)}; newest ring entry is
        // w_{t+center}, so the term for tap j has age j.
        for (long j = 0; j < ntap; ++j) {
            const auto& w = ring_at(j);
            const double c = spec_.taps[static_cast<std::size_t>(j)] * dt_;
            for (std::size_t k = 0; k < n; ++k) out[k] += c * w[k];
        }
        for (std::size_t k = 0; k < n; ++k) out[k] *= weight_[k];
        if (!spec_.spatial_window.empty()) apply_window(out);
    }
    std::size_t n_modes() const override { return dec_->n_modes(); }

  private:
    void advance_white() {
        head_ = (head_ + 1) % ring_.size();
        white_.next(ring_[head_]);
    }
    const std::vector<cplx>& ring_at(long age) const {
        const long m = static_cast<long>(ring_.size());
        return ring_[static_cast<std::size_t>(((static_cast<long>(head_) - age) % m + m) % m)];
    }
    void apply_window(std::vector<cplx>& modes) const {
        const std::size_t n = dec_->n_modes();
        const std::size_t ng = dec_->domain.size();
        Field g(ng, cplx{0.0, 0.0});
        for (std::size_t k = 0; k < n; ++k) {
            if (modes[k] == cplx{0.0, 0.0}) continue;
            for (std::size_t jg = 0; jg < ng; ++jg) g[jg] += modes[k] * basis_[k][jg];
        }
        for (std::size_t jg = 0; jg < ng; ++jg) g[jg] *= spec_.spatial_window[jg];
        for (std::size_t k = 0; k < n; ++k) {
            cplx s{0.0, 0.0};
            for (std::size_t jg = 0; jg < ng; ++jg) s += std::conj(basis_[k][jg]) * g[jg];
            modes[k] = s * dec_->domain.cell_volume;
        }
    }

    const SpectralDecomposition* dec_;
    NoiseSpec spec_;
    WhiteStream white_;
    double dt_;
    std::vector<double> weight_;
    std::vector<std::vector<cplx>> ring_;
    std::size_t head_ = 0;
    long center_ = 0;
    std::vector<std::vector<cplx>> basis_;
};

class MaterializedStream final : public SourceStream {
  public:
    explicit MaterializedStream(const SourceTrajectory& src) : src_(&src) {}
    void next(std::vector<cplx>& out) override {
        if (pos_ >= src_->steps) {
            out.assign(src_->dec.n_modes(), cplx{0.0, 0.0});
            return;
        }
        out = src_->mode_values[pos_++];
    }
    std::size_t n_modes() const override { return src_->dec.n_modes(); }

  private:
    const SourceTrajectory* src_;
    std::size_t pos_ = 0;
};

}  // namespace

std::unique_ptr<SourceStream> make_white_noise_stream(const SpectralDecomposition& dec, double dt,
                                                      std::uint64_t seed,
                                                      std::uint64_t realization_index,
                                                      bool real_noise) {
    return std::make_unique<WhiteStream>(dec, dt, seed, realization_index, real_noise);
}

std::unique_ptr<SourceStream> make_filtered_stream(const SpectralDecomposition& dec,
                                                   const NoiseSpec& spec, double dt,
                                                   std::uint64_t realization_index) {
    return std::make_unique<FilteredStream>(dec, spec, dt, realization_index);
}

std::unique_ptr<SourceStream> make_materialized_stream(const SourceTrajectory& src) {
    return std::make_unique<MaterializedStream>(src);
}

// -------------------------------------------------------------------------
// Serialization

std::string NoiseSpec::to_json() const {
    nlohmann::json j;
    j["band"] = band.all ? nlohmann::json("all")
                         : nlohmann::json(std::vector<double>{band.lo, band.hi});
    j["taps"] = taps;
    j["tap_dt"] = tap_dt;
    if (!band_dispersion.empty()) j["band_dispersion"] = band_dispersion;
    if (!mode_multiplier.empty()) j["mode_multiplier"] = mode_multiplier;
    if (!spatial_window.empty()) j["spatial_window"] = spatial_window;
    j["epsilon"] = epsilon;
    j["seed"] = seed;
    j["real_noise"] = real_noise;
    return j.dump(2);
}

NoiseSpec NoiseSpec::from_json(const std::string& text, const SpectralDecomposition& dec) {
    const auto j = nlohmann::json::parse(text);
    NoiseSpec s;
    s.domain = dec.domain;
    if (j.at("band").is_string()) {
        s.band = BandInterval::everything();
    } else {
        const auto b = j.at("band").get<std::vector<double>>();
        if (b.size() != 2) throw std::invalid_argument("band must be \"all\" or [lo, hi]");
        s.band = BandInterval::closed(b[0], b[1]);
    }
    s.taps = j.at("taps").get<std::vector<double>>();
    s.tap_dt = j.at("tap_dt").get<double>();
    if (j.contains("band_dispersion")) s.band_dispersion = j["band_dispersion"].get<std::vector<double>>();
    if (j.contains("mode_multiplier")) s.mode_multiplier = j["mode_multiplier"].get<std::vector<double>>();
    if (j.contains("spatial_window")) s.spatial_window = j["spatial_window"].get<std::vector<double>>();
    s.epsilon = j.value("epsilon", 1.0);
    s.seed = j.at("seed").get<std::uint64_t>();
    s.real_noise = j.value("real_noise", false);
    return s;
}

void SourceTrajectory::export_binary(const std::string& path_bin,
                                     const std::string& path_manifest) const {
    std::ofstream f(path_bin, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path_bin);
    for (const auto& row : mode_values)
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(cplx)));

    nlohmann::json j;
    j["dt"] = dt;
    j["steps"] = steps;
    j["n_modes"] = dec.n_modes();
    j["layout"] = "complex128 row-major [step][mode]";
    j["seed"] = seed;
    j["realization_index"] = realization_index;
    std::ofstream m(path_manifest);
    if (!m) throw std::runtime_error("cannot open " + path_manifest);
    m << j.dump(2) << "\n";
}

}  // namespace corrlab
