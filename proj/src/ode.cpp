#include "pendula/ode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <boost/math/tools/roots.hpp>

namespace pendula::ode {

namespace {

// Dormand-Prince 8(5,3) coefficients, as in DOP853.F.
constexpr double c2 = 0.526001519587677318785587544488E-01;
constexpr double c3 = 0.789002279381515978178381316732E-01;
constexpr double c4 = 0.118350341907227396726757197510E+00;
constexpr double c5 = 0.281649658092772603273242802490E+00;
constexpr double c6 = 0.333333333333333333333333333333E+00;
constexpr double c7 = 0.25E+00;
constexpr double c8 = 0.307692307692307692307692307692E+00;
constexpr double c9 = 0.651282051282051282051282051282E+00;
constexpr double c10 = 0.6E+00;
constexpr double c11 = 0.857142857142857142857142857142E+00;

constexpr double b1 = 5.42937341165687622380535766363E-2;
constexpr double b6 = 4.45031289275240888144113950566E0;
constexpr double b7 = 1.89151789931450038304281599044E0;
constexpr double b8 = -5.8012039600105847814672114227E0;
constexpr double b9 = 3.1116436695781989440891606237E-1;
constexpr double b10 = -1.52160949662516078556178806805E-1;
constexpr double b11 = 2.01365400804030348374776537501E-1;
constexpr double b12 = 4.47106157277725905176885569043E-2;

constexpr double a21 = 5.26001519587677318785587544488E-2;
constexpr double a31 = 1.97250569845378994544595329183E-2;
constexpr double a32 = 5.91751709536136983633785987549E-2;
constexpr double a41 = 2.95875854768068491816892993775E-2;
constexpr double a43 = 8.87627564304205475450678981324E-2;
constexpr double a51 = 2.41365134159266685502369798665E-1;
constexpr double a53 = -8.84549479328286085344864962717E-1;
constexpr double a54 = 9.24834003261792003115737966543E-1;
constexpr double a61 = 3.7037037037037037037037037037E-2;
constexpr double a64 = 1.70828608729473871279604482173E-1;
constexpr double a65 = 1.25467687566822425016691814123E-1;
constexpr double a71 = 3.7109375E-2;
constexpr double a74 = 1.70252211019544039314978060272E-1;
constexpr double a75 = 6.02165389804559606850219397283E-2;
constexpr double a76 = -1.7578125E-2;
constexpr double a81 = 3.70920001185047927108779319836E-2;
constexpr double a84 = 1.70383925712239993810214054705E-1;
constexpr double a85 = 1.07262030446373284651809199168E-1;
constexpr double a86 = -1.53194377486244017527936158236E-2;
constexpr double a87 = 8.27378916381402288758473766002E-3;
constexpr double a91 = 6.24110958716075717114429577812E-1;
constexpr double a94 = -3.36089262944694129406857109825E0;
constexpr double a95 = -8.68219346841726006818189891453E-1;
constexpr double a96 = 2.75920996994467083049415600797E1;
constexpr double a97 = 2.01540675504778934086186788979E1;
constexpr double a98 = -4.34898841810699588477366255144E1;
constexpr double a101 = 4.77662536438264365890433908527E-1;
constexpr double a104 = -2.48811461997166764192642586468E0;
constexpr double a105 = -5.90290826836842996371446475743E-1;
constexpr double a106 = 2.12300514481811942347288949897E1;
constexpr double a107 = 1.52792336328824235832596922938E1;
constexpr double a108 = -3.32882109689848629194453265587E1;
constexpr double a109 = -2.03312017085086261358222928593E-2;
constexpr double a111 = -9.3714243008598732571704021658E-1;
constexpr double a114 = 5.18637242884406370830023853209E0;
constexpr double a115 = 1.09143734899672957818500254654E0;
constexpr double a116 = -8.14978701074692612513997267357E0;
constexpr double a117 = -1.85200656599969598641566180701E1;
constexpr double a118 = 2.27394870993505042818970056734E1;
constexpr double a119 = 2.49360555267965238987089396762E0;
constexpr double a1110 = -3.0467644718982195003823669022E0;
constexpr double a121 = 2.27331014751653820792359768449E0;
constexpr double a124 = -1.05344954667372501984066689879E1;
constexpr double a125 = -2.00087205822486249909675718444E0;
constexpr double a126 = -1.79589318631187989172765950534E1;
constexpr double a127 = 2.79488845294199600508499808837E1;
constexpr double a128 = -2.85899827713502369474065508674E0;
constexpr double a129 = -8.87285693353062954433549289258E0;
constexpr double a1210 = 1.23605671757943030647266201528E1;
constexpr double a1211 = 6.43392746015763530355970484046E-1;

constexpr double bhh1 = 0.244094488188976377952755905512E+00;
constexpr double bhh2 = 0.733846688281611857341361741547E+00;
constexpr double bhh3 = 0.220588235294117647058823529412E-01;
constexpr double er1 = 0.1312004499419488073250102996E-01;
constexpr double er6 = -0.1225156446376204440720569753E+01;
constexpr double er7 = -0.4957589496572501915214079952E+00;
constexpr double er8 = 0.1664377182454986536961530415E+01;
constexpr double er9 = -0.3503288487499736816886487290E+00;
constexpr double er10 = 0.3341791187130174790297318841E+00;
constexpr double er11 = 0.8192320648511571246570742613E-01;
constexpr double er12 = -0.2235530786388629525884427845E-01;

constexpr double kUround = 2.3e-16;

int sign_of(double x) { return (x > 0) - (x < 0); }

bool crosses(double g0, double g1, int direction) {
    if (g0 == 0.0 || sign_of(g0) == sign_of(g1)) return false;
    if (direction > 0) return g1 > g0;
    if (direction < 0) return g1 < g0;
    return true;
}

} // namespace

struct Dop853::Work {
    explicit Work(std::size_t n)
        : k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), k8(n), k9(n), k10(n), k11(n), k12(n),
          tmp(n), bsum(n), y_new(n) {}
    State k2, k3, k4, k5, k6, k7, k8, k9, k10, k11, k12, tmp, bsum, y_new;
    // k1 of the step that produced bsum/y_new (error estimation needs it)
    std::span<const double> k1;
};

Dop853::Dop853(Rhs f, std::size_t dim) : f_(std::move(f)), n_(dim) {}

void Dop853::stage_sweep(Work &w, double t, std::span<const double> y, double h,
                         std::span<const double> k1) const {
    const std::size_t n = n_;
    auto &tmp = w.tmp;
    w.k1 = k1;
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k1[i];
    f_(t + c2 * h, tmp, w.k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * w.k2[i]);
    f_(t + c3 * h, tmp, w.k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a41 * k1[i] + a43 * w.k3[i]);
    f_(t + c4 * h, tmp, w.k4);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a51 * k1[i] + a53 * w.k3[i] + a54 * w.k4[i]);
    f_(t + c5 * h, tmp, w.k5);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a61 * k1[i] + a64 * w.k4[i] + a65 * w.k5[i]);
    f_(t + c6 * h, tmp, w.k6);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a71 * k1[i] + a74 * w.k4[i] + a75 * w.k5[i] + a76 * w.k6[i]);
    f_(t + c7 * h, tmp, w.k7);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a81 * k1[i] + a84 * w.k4[i] + a85 * w.k5[i] + a86 * w.k6[i] +
                             a87 * w.k7[i]);
    f_(t + c8 * h, tmp, w.k8);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a91 * k1[i] + a94 * w.k4[i] + a95 * w.k5[i] + a96 * w.k6[i] +
                             a97 * w.k7[i] + a98 * w.k8[i]);
    f_(t + c9 * h, tmp, w.k9);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a101 * k1[i] + a104 * w.k4[i] + a105 * w.k5[i] + a106 * w.k6[i] +
                             a107 * w.k7[i] + a108 * w.k8[i] + a109 * w.k9[i]);
    f_(t + c10 * h, tmp, w.k10);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a111 * k1[i] + a114 * w.k4[i] + a115 * w.k5[i] + a116 * w.k6[i] +
                             a117 * w.k7[i] + a118 * w.k8[i] + a119 * w.k9[i] +
                             a1110 * w.k10[i]);
    f_(t + c11 * h, tmp, w.k11);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + h * (a121 * k1[i] + a124 * w.k4[i] + a125 * w.k5[i] + a126 * w.k6[i] +
                             a127 * w.k7[i] + a128 * w.k8[i] + a129 * w.k9[i] +
                             a1210 * w.k10[i] + a1211 * w.k11[i]);
    f_(t + h, tmp, w.k12);
    for (std::size_t i = 0; i < n; ++i) {
        w.bsum[i] = b1 * k1[i] + b6 * w.k6[i] + b7 * w.k7[i] + b8 * w.k8[i] + b9 * w.k9[i] +
                    b10 * w.k10[i] + b11 * w.k11[i] + b12 * w.k12[i];
        w.y_new[i] = y[i] + h * w.bsum[i];
    }
}

double Dop853::error_norm(const Work &w, std::span<const double> y, double h,
                          const Tolerances &tol) const {
    double err = 0.0, err2 = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        const double sk = 1.0 / (tol.abs + tol.rel * std::max(std::fabs(y[i]), std::fabs(w.y_new[i])));
        double q = (w.bsum[i] - bhh1 * w.k1[i] - bhh2 * w.k9[i] - bhh3 * w.k12[i]) * sk;
        err2 += q * q;
        q = (er1 * w.k1[i] + er6 * w.k6[i] + er7 * w.k7[i] + er8 * w.k8[i] + er9 * w.k9[i] +
             er10 * w.k10[i] + er11 * w.k11[i] + er12 * w.k12[i]) *
            sk;
        err += q * q;
    }
    const double deno = err + 0.01 * err2;
    const double n = static_cast<double>(n_);
    return std::fabs(h) * err * std::sqrt(1.0 / (deno <= 0.0 ? n : deno * n));
}

double Dop853::initial_step(double t, std::span<const double> y, std::span<const double> f0,
                            double direction, double hmax, const Tolerances &tol) const {
    double dnf = 0, dny = 0;
    for (std::size_t i = 0; i < n_; ++i) {
        const double sk = tol.abs + tol.rel * std::fabs(y[i]);
        dnf += (f0[i] / sk) * (f0[i] / sk);
        dny += (y[i] / sk) * (y[i] / sk);
    }
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * std::sqrt(dny / dnf);
    h = std::min(h, hmax) * direction;
    State y1(n_), f1(n_);
    for (std::size_t i = 0; i < n_; ++i) y1[i] = y[i] + h * f0[i];
    f_(t + h, y1, f1);
    double der2 = 0;
    for (std::size_t i = 0; i < n_; ++i) {
        const double sk = tol.abs + tol.rel * std::fabs(y[i]);
        der2 += ((f1[i] - f0[i]) / sk) * ((f1[i] - f0[i]) / sk);
    }
    der2 = std::sqrt(der2) / std::fabs(h);
    const double der12 = std::max(der2, std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, std::fabs(h) * 1e-3)
                                     : std::pow(0.01 / der12, 1.0 / 8.0);
    return direction * std::min({100 * std::fabs(h), h1, hmax});
}

State Dop853::step(double t, std::span<const double> y, double h) const {
    Work w(n_);
    State k1(n_);
    f_(t, y, k1);
    stage_sweep(w, t, y, h, k1);
    return w.y_new;
}

FlowResult Dop853::integrate(double t0, std::span<const double> y0, double t1,
                             const FlowOptions &opts) const {
    FlowResult out;
    State y(y0.begin(), y0.end());
    double t = t0;
    auto emit = [&](double ts, const State &ys) {
        out.ts.push_back(ts);
        out.ys.push_back(ys);
    };
    if (opts.record_steps || opts.sample_dt > 0) emit(t, y);
    if (t1 == t0) {
        out.t_end = t;
        out.y_end = y;
        return out;
    }

    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double hmax = std::min(std::fabs(t1 - t0), opts.max_step);
    Work w(n_);
    State k1(n_);
    f_(t, y, k1);
    double h = initial_step(t, y, k1, dir, hmax, opts.tol);

    std::vector<double> g_prev(opts.events.size());
    for (std::size_t e = 0; e < opts.events.size(); ++e) g_prev[e] = opts.events[e].g(t, y);

    double next_sample = t0 + dir * opts.sample_dt;
    std::int64_t sample_index = 1;
    bool reject = false;
    bool last = false;

    while (true) {
        if (out.steps > opts.max_steps) throw StepUnderflow("DOP853: step budget exhausted", t);
        if (0.1 * std::fabs(h) <= std::fabs(t) * kUround)
            throw StepUnderflow("DOP853: step size underflow", t);
        if ((t + 1.01 * h - t1) * dir > 0.0) {
            h = t1 - t;
            last = true;
        }
        ++out.steps;
        stage_sweep(w, t, y, h, k1);
        const double err = error_norm(w, y, h, opts.tol);
        const double fac11 = std::pow(err, 1.0 / 8.0);
        const double fac = std::max(1.0 / 6.0, std::min(3.0, fac11 / 0.9));
        double hnew = h / fac;

        if (err > 1.0) {
            hnew = h / std::min(3.0, fac11 / 0.9);
            reject = true;
            if (out.steps > 1) ++out.rejected;
            last = false;
            h = hnew;
            continue;
        }

        const double t_new = last ? t1 : t + h;

        // Events inside (t, t_new]
        std::vector<EventHit> step_hits;
        for (std::size_t e = 0; e < opts.events.size(); ++e) {
            const auto &ev = opts.events[e];
            const double g1 = ev.g(t_new, w.y_new);
            if (crosses(g_prev[e], g1, ev.direction)) {
                auto g_at = [&](double tau) {
                    if (tau == 0.0) return g_prev[e];
                    const State ys = step(t, y, tau);
                    return ev.g(t + tau, ys);
                };
                boost::math::tools::eps_tolerance<double> tol_fn(50);
                std::uintmax_t iters = 100;
                const double lo = std::min(0.0, t_new - t), hi = std::max(0.0, t_new - t);
                const auto bracket =
                    boost::math::tools::toms748_solve(g_at, lo, hi, tol_fn, iters);
                const double tau = 0.5 * (bracket.first + bracket.second);
                step_hits.push_back({e, t + tau, step(t, y, tau)});
            }
            g_prev[e] = g1;
        }
        std::sort(step_hits.begin(), step_hits.end(),
                  [dir](const EventHit &a, const EventHit &b) { return (a.t - b.t) * dir < 0; });
        const EventHit *stop = nullptr;
        for (const auto &hit : step_hits) {
            out.hits.push_back(hit);
            if (opts.events[hit.event].terminal) {
                stop = &out.hits.back();
                break;
            }
        }
        const double t_limit = stop ? stop->t : t_new;

        if (opts.sample_dt > 0) {
            while ((next_sample - t_limit) * dir <= 0 &&
                   (next_sample - t1) * dir <= 1e-12 * std::fabs(t1)) {
                if (std::fabs(next_sample - t_new) <= 1e-14 * std::max(1.0, std::fabs(t_new)))
                    emit(t_new, w.y_new);
                else
                    emit(next_sample, step(t, y, next_sample - t));
                ++sample_index;
                next_sample = t0 + dir * opts.sample_dt * static_cast<double>(sample_index);
            }
        }

        if (stop) {
            out.stopped_by_event = true;
            out.t_end = stop->t;
            out.y_end = stop->y;
            if (opts.record_steps) emit(stop->t, stop->y);
            return out;
        }

        y = w.y_new;
        t = t_new;
        f_(t, y, k1);
        if (opts.record_steps) emit(t, y);
        if (last) {
            out.t_end = t;
            out.y_end = y;
            return out;
        }
        if (std::fabs(hnew) > hmax) hnew = dir * hmax;
        if (reject) hnew = dir * std::min(std::fabs(hnew), std::fabs(h));
        reject = false;
        h = hnew;
    }
}

State yoshida6_flow(const Force &force, std::span<const double> xy, double h, std::size_t steps,
                    const std::function<void(double, std::span<const double>)> &observer) {
    // Yoshida (1990), solution A.
    constexpr double w1 = -1.17767998417887;
    constexpr double w2 = 0.235573213359357;
    constexpr double w3 = 0.784513610477560;
    constexpr double w0 = 1.0 - 2.0 * (w1 + w2 + w3);
    constexpr double weights[7] = {w3, w2, w1, w0, w1, w2, w3};

    const std::size_t n = xy.size() / 2;
    State state(xy.begin(), xy.end());
    std::span<double> x(state.data(), n), v(state.data() + n, n);
    State f(n);
    for (std::size_t s = 0; s < steps; ++s) {
        for (double wk : weights) {
            const double hk = wk * h;
            force(x, f);
            for (std::size_t i = 0; i < n; ++i) v[i] += 0.5 * hk * f[i];
            for (std::size_t i = 0; i < n; ++i) x[i] += hk * v[i];
            force(x, f);
            for (std::size_t i = 0; i < n; ++i) v[i] += 0.5 * hk * f[i];
        }
        if (observer) observer(static_cast<double>(s + 1) * h, state);
    }
    return state;
}

} // namespace pendula::ode
