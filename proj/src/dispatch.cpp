#include <algorithm>
#include <cmath>

#include "gridwatch/errors.hpp"
#include "gridwatch/pipeline.hpp"
#include "gridwatch/rng.hpp"

namespace gridwatch::pipe {

Dispatcher::Dispatcher(const grid::GridCase& c, const grid::ObservationMatrix& om,
                       std::uint64_t seed)
    : case_(c), om_(om), seed_(seed) {
    load_bus_idx_ = c.load_bus_indices();
    ref_idx_ = c.bus_index(c.slack_bus);
    for (const auto& b : c.buses) total_gs_ += b.gs;

    // reduced bus susceptance matrix = injection rows of H without the
    // reference row; SPD for connected grids
    const int n1 = om.cols();
    lin::Matrix b_red(n1, n1);
    int rr = 0;
    for (int i = 0; i < c.n_buses(); ++i) {
        if (i == ref_idx_) continue;
        for (int cidx = 0; cidx < n1; ++cidx) b_red(rr, cidx) = om.H(i, cidx);
        ++rr;
    }
    b_red_ = std::make_unique<lin::Cholesky>(b_red);
}

double Dispatcher::total_capacity() const {
    double s = 0.0;
    for (const auto& g : case_.generators)
        if (g.in_service) s += g.pmax;
    return s;
}

DispatchStep Dispatcher::step(const lin::Vector& load_per_load_bus, int t) const {
    if (load_per_load_bus.size() != load_bus_idx_.size())
        throw ShapeError("dispatch: load vector length != number of load buses");
    double demand = total_gs_;
    for (double d : load_per_load_bus) demand += d;

    // stepped cost perturbation, held constant within a block of steps
    const int block = t / kCostBlockSteps;
    std::vector<double> c1(case_.generators.size());
    std::vector<double> c2(case_.generators.size());
    double pmin_sum = 0.0, pmax_sum = 0.0;
    for (std::size_t g = 0; g < case_.generators.size(); ++g) {
        const auto& gen = case_.generators[g];
        rng::Rng r(rng::derive(seed_, "gencost",
                               (static_cast<std::uint64_t>(block) << 16) ^ static_cast<std::uint64_t>(g)));
        const double mult = r.uniform(0.85, 1.15);
        c1[g] = gen.cost_c1 * mult;
        c2[g] = std::max(gen.cost_c2, 1e-6);
        if (gen.in_service) {
            pmin_sum += gen.pmin;
            pmax_sum += gen.pmax;
        }
    }
    if (demand < pmin_sum - 1e-9 || demand > pmax_sum + 1e-9)
        throw InfeasibleError("dispatch infeasible at time step " + std::to_string(t) +
                              ": demand " + std::to_string(demand) + " p.u. outside [" +
                              std::to_string(pmin_sum) + ", " + std::to_string(pmax_sum) + "]");

    // equal marginal cost: P_g(lambda) = clamp((lambda - c1)/(2 c2), pmin, pmax)
    auto total_at = [&](double lambda) {
        double s = 0.0;
        for (std::size_t g = 0; g < case_.generators.size(); ++g) {
            const auto& gen = case_.generators[g];
            if (!gen.in_service) continue;
            const double p = (lambda - c1[g]) / (2.0 * c2[g]);
            s += std::clamp(p, gen.pmin, gen.pmax);
        }
        return s;
    };
    double lo = 0.0, hi = 1.0;
    for (std::size_t g = 0; g < case_.generators.size(); ++g) {
        lo = std::min(lo, c1[g]);
        hi = std::max(hi, c1[g] + 2.0 * c2[g] * case_.generators[g].pmax);
    }
    while (total_at(hi) < demand) hi = hi * 2.0 + 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (total_at(mid) < demand)
            lo = mid;
        else
            hi = mid;
    }
    const double lambda = 0.5 * (lo + hi);

    DispatchStep out;
    out.gen_p.resize(case_.generators.size(), 0.0);
    double dispatched = 0.0;
    for (std::size_t g = 0; g < case_.generators.size(); ++g) {
        const auto& gen = case_.generators[g];
        if (!gen.in_service) continue;
        const double p = std::clamp((lambda - c1[g]) / (2.0 * c2[g]), gen.pmin, gen.pmax);
        out.gen_p[g] = p;
        dispatched += p;
    }
    // close the residual bisection gap on a generator with slack capacity so
    // the power balance is exact
    double residual = demand - dispatched;
    for (std::size_t g = 0; g < case_.generators.size() && std::fabs(residual) > 0.0; ++g) {
        const auto& gen = case_.generators[g];
        if (!gen.in_service) continue;
        const double adjusted = std::clamp(out.gen_p[g] + residual, gen.pmin, gen.pmax);
        residual -= adjusted - out.gen_p[g];
        out.gen_p[g] = adjusted;
    }
    if (std::fabs(residual) > 1e-9)
        throw InfeasibleError("dispatch balance failed at time step " + std::to_string(t));

    // net injections, then DC power flow for the angles
    lin::Vector p_net(static_cast<std::size_t>(case_.n_buses()), 0.0);
    for (std::size_t g = 0; g < case_.generators.size(); ++g)
        p_net[static_cast<std::size_t>(case_.bus_index(case_.generators[g].bus))] += out.gen_p[g];
    for (std::size_t l = 0; l < load_bus_idx_.size(); ++l)
        p_net[static_cast<std::size_t>(load_bus_idx_[l])] -= load_per_load_bus[l];
    for (int i = 0; i < case_.n_buses(); ++i) p_net[static_cast<std::size_t>(i)] -= case_.buses[static_cast<std::size_t>(i)].gs;
    // phase-shift offsets (zero for unshifted lines)
    for (const auto& br : case_.branches) {
        if (!br.in_service || br.shift_deg == 0.0) continue;
        const double off = br.susceptance() * br.shift_rad();
        p_net[static_cast<std::size_t>(case_.bus_index(br.from))] += off;
        p_net[static_cast<std::size_t>(case_.bus_index(br.to))] -= off;
    }

    lin::Vector rhs;
    rhs.reserve(p_net.size() - 1);
    for (int i = 0; i < case_.n_buses(); ++i)
        if (i != ref_idx_) rhs.push_back(p_net[static_cast<std::size_t>(i)]);
    out.theta = b_red_->solve(rhs);
    return out;
}

lin::Vector Dispatcher::assemble(const DispatchStep& s, const lin::Vector& load_per_load_bus) const {
    // physical measurements, then Eq.-style offset removal; equals H * theta
    const int n = case_.n_buses();
    lin::Vector z(static_cast<std::size_t>(om_.rows()), 0.0);
    // injections: Cg Pg - Pd - Gs - P_bus,shift
    for (std::size_t g = 0; g < case_.generators.size(); ++g)
        z[static_cast<std::size_t>(case_.bus_index(case_.generators[g].bus))] += s.gen_p[g];
    for (std::size_t l = 0; l < load_bus_idx_.size(); ++l)
        z[static_cast<std::size_t>(load_bus_idx_[l])] -= load_per_load_bus[l];
    for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] -= case_.buses[static_cast<std::size_t>(i)].gs;
    for (const auto& br : case_.branches) {
        if (!br.in_service || br.shift_deg == 0.0) continue;
        const double off = br.susceptance() * br.shift_rad();
        z[static_cast<std::size_t>(case_.bus_index(br.from))] += off;
        z[static_cast<std::size_t>(case_.bus_index(br.to))] -= off;
    }
    // flows: P_f - P_f,shift = b (theta_f - theta_t)
    auto theta_of = [&](int bus_idx) -> double {
        if (bus_idx == ref_idx_) return 0.0;
        const int col = bus_idx < ref_idx_ ? bus_idx : bus_idx - 1;
        return s.theta[static_cast<std::size_t>(col)];
    };
    int row = n;
    for (const auto& br : case_.branches) {
        if (!br.in_service) continue;
        const double b = br.susceptance();
        z[static_cast<std::size_t>(row)] =
            b * (theta_of(case_.bus_index(br.from)) - theta_of(case_.bus_index(br.to)));
        ++row;
    }
    return z;
}

MeasurementSeries dispatch_and_measure(const grid::GridCase& c, const grid::ObservationMatrix& om,
                                       const LoadProfileSet& loads, double noise_sigma,
                                       std::uint64_t seed) {
    const auto load_buses = c.load_bus_indices();
    if (loads.loads.dim(0) != static_cast<int>(load_buses.size()))
        throw ValidationError("dispatch_and_measure: load set has " +
                              std::to_string(loads.loads.dim(0)) + " loads, case has " +
                              std::to_string(load_buses.size()) + " load buses");
    Dispatcher d(c, om, seed);

    // feasibility precondition: capacity covers the peak
    double peak = 0.0;
    for (int t = 0; t < loads.loads.dim(1); ++t) {
        double tot = 0.0;
        for (int l = 0; l < loads.loads.dim(0); ++l) tot += loads.loads.at(l, t);
        peak = std::max(peak, tot);
    }
    if (peak > d.total_capacity())
        throw InfeasibleError("peak total load " + std::to_string(peak) +
                              " p.u. exceeds generation capacity " + std::to_string(d.total_capacity()));

    const int n_steps = loads.loads.dim(1);
    MeasurementSeries out;
    out.z_raw = Tensor(om.rows(), n_steps);
    out.noise_sigma = noise_sigma;
    out.seed = seed;
    lin::Vector load_vec(static_cast<std::size_t>(loads.loads.dim(0)));
    for (int t = 0; t < n_steps; ++t) {
        for (int l = 0; l < loads.loads.dim(0); ++l) load_vec[static_cast<std::size_t>(l)] = loads.loads.at(l, t);
        const auto step = d.step(load_vec, t);
        const auto z = d.assemble(step, load_vec);
        rng::Rng noise(rng::derive(seed, "noise", static_cast<std::uint64_t>(t)));
        for (int r = 0; r < om.rows(); ++r)
            out.z_raw.at(r, t) = z[static_cast<std::size_t>(r)] +
                                 (noise_sigma > 0.0 ? noise.normal() * noise_sigma : 0.0);
    }
    return out;
}

}  // namespace gridwatch::pipe
