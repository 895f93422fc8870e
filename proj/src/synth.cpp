#include "flexnoise/synth.hpp"

#include <cmath>
#include <sstream>

#include "flexnoise/error.hpp"
#include "flexnoise/io.hpp"

namespace flexnoise {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_sigma(double sigma)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw InputError("noise spec: sigma must be positive");
    }
}

void validate_segment(const SegmentSpec& spec)
{
    std::visit(Overloaded{
                   [](const IidSpec& s) { check_sigma(s.sigma); },
                   [](const Ar1Spec& s) {
                       check_sigma(s.sigma);
                       if (!(std::abs(s.rho) < 1.0)) {
                           throw InputError("noise spec: AR(1) needs |rho| < 1");
                       }
                   },
                   [](const MultiplicativeSpec& s) {
                       check_sigma(s.sigma);
                       if (!std::isfinite(s.eta)) {
                           throw InputError("noise spec: eta must be finite");
                       }
                   },
               },
               spec);
}

VectorXd segment_noise(const VectorXd& f, const SegmentSpec& spec, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto n = f.size();
    VectorXd eps(n);
    std::visit(Overloaded{
                   [&](const IidSpec& s) {
                       for (Eigen::Index i = 0; i < n; ++i) {
                           eps[i] = s.sigma * normal(rng);
                       }
                   },
                   [&](const Ar1Spec& s) {
                       const double innov = s.sigma * std::sqrt(1.0 - s.rho * s.rho);
                       for (Eigen::Index i = 0; i < n; ++i) {
                           eps[i] = i == 0 ? s.sigma * normal(rng) : s.rho * eps[i - 1] + innov * normal(rng);
                       }
                   },
                   [&](const MultiplicativeSpec& s) {
                       for (Eigen::Index i = 0; i < n; ++i) {
                           eps[i] = std::pow(std::abs(f[i]), s.eta) * s.sigma * normal(rng);
                       }
                   },
               },
               spec);
    return eps;
}

void segment_profile(const VectorXd& f, const SegmentSpec& spec, TrueProfile& out, Eigen::Index start)
{
    const auto n = f.size();
    std::visit(Overloaded{
                   [&](const IidSpec& s) {
                       out.sd.segment(start, n).setConstant(s.sigma);
                       out.lag1.segment(start, n).setZero();
                   },
                   [&](const Ar1Spec& s) {
                       out.sd.segment(start, n).setConstant(s.sigma);
                       out.lag1.segment(start, n).setConstant(s.rho);
                   },
                   [&](const MultiplicativeSpec& s) {
                       for (Eigen::Index i = 0; i < n; ++i) {
                           out.sd[start + i] = s.sigma * std::pow(std::abs(f[i]), s.eta);
                       }
                       out.lag1.segment(start, n).setZero();
                   },
               },
               spec);
    if (n > 0) {
        out.lag1[start + n - 1] = 0.0;
    }
}

std::string describe_segment(const SegmentSpec& spec)
{
    using io::format_double;
    return std::visit(Overloaded{
                          [](const IidSpec& s) { return "iid(sigma=" + format_double(s.sigma) + ")"; },
                          [](const Ar1Spec& s) {
                              return "ar1(rho=" + format_double(s.rho) + ",sigma=" + format_double(s.sigma) + ")";
                          },
                          [](const MultiplicativeSpec& s) {
                              return "multiplicative(eta=" + format_double(s.eta) +
                                     ",sigma=" + format_double(s.sigma) + ")";
                          },
                      },
                      spec);
}

} // namespace

void validate(const NoiseSpec& spec, Eigen::Index n)
{
    if (const auto* b = std::get_if<BlockedSpec>(&spec)) {
        if (b->segments.empty()) {
            throw InputError("noise spec: blocked spec has no segments");
        }
        Eigen::Index total = 0;
        for (const auto& seg : b->segments) {
            if (seg.length < 1) {
                throw InputError("noise spec: empty segment");
            }
            validate_segment(seg.spec);
            total += seg.length;
        }
        if (total != n) {
            throw InputError("noise spec: segment lengths sum to " + std::to_string(total) + ", expected " +
                             std::to_string(n));
        }
        return;
    }
    std::visit(Overloaded{
                   [](const BlockedSpec&) {},
                   [](const auto& s) { validate_segment(SegmentSpec{s}); },
               },
               spec);
}

VectorXd generate(const VectorXd& trajectory, const NoiseSpec& spec, Rng& rng)
{
    if (!trajectory.allFinite()) {
        throw InputError("generate: trajectory is not finite");
    }
    validate(spec, trajectory.size());
    VectorXd noise(trajectory.size());
    if (const auto* b = std::get_if<BlockedSpec>(&spec)) {
        Eigen::Index start = 0;
        for (const auto& seg : b->segments) {
            noise.segment(start, seg.length) = segment_noise(trajectory.segment(start, seg.length), seg.spec, rng);
            start += seg.length;
        }
    } else {
        std::visit(Overloaded{
                       [](const BlockedSpec&) {},
                       [&](const auto& s) { noise = segment_noise(trajectory, SegmentSpec{s}, rng); },
                   },
                   spec);
    }
    return trajectory + noise;
}

TrueProfile true_profile(const VectorXd& trajectory, const NoiseSpec& spec)
{
    validate(spec, trajectory.size());
    const auto n = trajectory.size();
    TrueProfile out{VectorXd(n), VectorXd(n)};
    if (const auto* b = std::get_if<BlockedSpec>(&spec)) {
        Eigen::Index start = 0;
        for (const auto& seg : b->segments) {
            segment_profile(trajectory.segment(start, seg.length), seg.spec, out, start);
            start += seg.length;
        }
    } else {
        std::visit(Overloaded{
                       [](const BlockedSpec&) {},
                       [&](const auto& s) { segment_profile(trajectory, SegmentSpec{s}, out, 0); },
                   },
                   spec);
    }
    out.lag1[n - 1] = std::numeric_limits<double>::quiet_NaN();
    return out;
}

std::string describe(const NoiseSpec& spec)
{
    if (const auto* b = std::get_if<BlockedSpec>(&spec)) {
        std::string out = "blocked[";
        for (std::size_t i = 0; i < b->segments.size(); ++i) {
            out += (i ? ";" : "") + std::to_string(b->segments[i].length) + ":" + describe_segment(b->segments[i].spec);
        }
        return out + "]";
    }
    return std::visit(Overloaded{
                          [](const BlockedSpec&) { return std::string{}; },
                          [](const auto& s) { return describe_segment(SegmentSpec{s}); },
                      },
                      spec);
}

NoiseSpec ar1_regime(double rho, double sigma)
{
    return Ar1Spec{rho, sigma};
}

NoiseSpec multiplicative_regime(double eta, double sigma)
{
    return MultiplicativeSpec{eta, sigma};
}

NoiseSpec five_regime(Eigen::Index block_length)
{
    return BlockedSpec{{
        {block_length, IidSpec{3.0}},
        {block_length, Ar1Spec{0.85, 3.0}},
        {block_length, IidSpec{3.0}},
        {block_length, IidSpec{30.0}},
        {block_length, IidSpec{3.0}},
    }};
}

} // namespace flexnoise
