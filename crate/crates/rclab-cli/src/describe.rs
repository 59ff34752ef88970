//! One-paragraph descriptions of what each command computes, which
//! mathematical statement it exercises, and the flags it accepts.

pub fn describe(command: &str) -> Option<String> {
    let (text, flags) = match command {
        "env sample" => (
            "Samples an i.i.d. conductance field on the bonds of [-R, R]^d and \
             writes it to a binary file. The canonical law has exact power CDF \
             P(w <= a) = a^gamma on [0, 1]; the site-min variant takes the \
             minimum of two i.i.d. site variables per bond; the constant law \
             fixes every bond. Fields are a pure function of (d, radius, law, \
             seed) via a counter-based generator.",
            "--d --law polytail|sitemin|constant --gamma|--value --radius --seed --out <file>",
        ),
        "env stat" => (
            "Computes log(min conductance over the bonds of [-N, N]^d) / log N. \
             Under the power-tail law this statistic converges to -d/gamma as N \
             grows, which calibrates the conductance floor alpha(N) = \
             N^-(d/gamma + mu) used by the surface bound.",
            "--in <file> | (--d --law --gamma --radius --seed [--seeds k]) --N",
        ),
        "kernel return" => (
            "Propagates the exact walk distribution from the origin and records \
             the even-step return probabilities P^{2n}(0,0) on a grid of n, \
             each with a one-sided truncation error bound. The log-log slope \
             of this series is the decay exponent the theory brackets between \
             -2(1 + d(2d-1)gamma) and -2 for small gamma (d >= 5), and pushes \
             towards -d/2 + 4d^2/gamma for large gamma.",
            "--in <file> | (--d --law --gamma --radius --seed) --grid n1,n2,... | \
             (--nmin --nmax [--per-octave]) [--tau] [--gnuplot <file>]",
        ),
        "kernel dist" => (
            "Computes the exact n-step distribution P^n(source, .) by sparse \
             mass propagation with certified truncation: every reported mass m \
             brackets the true value in [m, m + lost_mass_bound].",
            "--in <file> | (env flags) --n [--source x,y,...] [--tau]",
        ),
        "walk simulate" => (
            "Samples a quenched trajectory: each step moves to a neighbor with \
             probability w(x,y) / pi(x), where pi(x) is the sum of the \
             incident conductances. Seeded and reproducible step by step.",
            "--in <file> | (env flags) --length [--start x,y,...] [--walk-seed]",
        ),
        "traps scan" => (
            "Scans a window for the trap configuration: a weak entry bond with \
             w in (N^-a/2, N^-a], a strong held bond with w >= xi, and every \
             other bond out of the two held sites at most N^-a. Each hit is \
             reported with its conductances; every hit satisfies the crossing \
             bound w(x,y)/pi(x) >= 1/(4d N^a).",
            "--in <file> | (env flags) --N [--alpha | --eps] [--xi] [--region-radius]",
        ),
        "traps qn" => (
            "Evaluates the closed-form probability that one fresh bond \
             collection forms a trap: q_N = (1 - 2^-gamma)(1 - xi^gamma) \
             N^-(1-eps) at the derived exponent a = (1-eps)/((4d-2) gamma), \
             or the general product for an explicit exponent.",
            "--d --gamma --N [--xi] [--eps] [--alpha]",
        ),
        "traps lambda" => (
            "Runs the boundary-hit experiment: fresh field per replica, walk \
             from the origin, and the indicator of a trap at each of the N \
             successive boundary hits. Because each collection lies outside \
             the box already explored, the indicators are independent with \
             common probability q_N; the report checks the marginals, the \
             pairwise and triple joint frequencies against products, and the \
             no-trap frequency against (1 - q_N)^N.",
            "--N [--d] [--gamma] [--xi] [--eps] [--replicas] [--seed]",
        ),
        "iso profile" => (
            "Computes the isoperimetric profile Phi(r) of a finite reversible \
             chain: the infimum of Q(S, S^c)/pi(S) over connected proper \
             subsets with pi(S) <= r, by exhaustive enumeration (exact) or \
             random growth (sampled, non-certified).",
            "--chain <json> | (--from-env --N [--horizon] [env flags] [--export-chain <file>]) \
             [--r-grid r1,r2,...] [--budget] [--sampled k]",
        ),
        "iso mp" => (
            "Evaluates the evolving-set heat-kernel threshold: the smallest n \
             with n >= 1 + ((1-sigma)^2/sigma^2) * integral from \
             4(pi(x) /\\ pi(y)) to 4/eps of 4 du / (u Phi(u)^2), computed in \
             closed form on the piecewise-constant profile, then verifies \
             P^n(x,y) <= eps pi(y) by exact matrix power for all n such that \
             the bound is claimed.",
            "--chain <json> | (--from-env ...) --epsilon [--sigma] [--pairs all|x:y,...]",
        ),
        "iso check" => (
            "Isoperimetry checks: the empirical constant kappa = min over \
             shapes of |boundary| / |shape|^((d-1)/d) over square and strip \
             families, and optionally the two-step surface bound \
             Q(S, S^c) >= alpha^2/(2d) |boundary| and volume bound pi(S) <= \
             2d |S| on random connected even subsets of a modified field.",
            "[--d] [--max-side] | (--surface-volume [--gamma] [--N] [--mu] [--subsets] [--seed])",
        ),
        "fit exponent" => (
            "Least-squares slope of log value against log n over a grid range, \
             with a nonparametric bootstrap confidence interval over the grid \
             points. Exact power-law input recovers its exponent to 1e-6.",
            "--in <series.csv> --nmin --nmax [--seed]",
        ),
        "report bounds" => (
            "Fits the decay exponent and places it against the theoretical \
             targets, all evaluated in exact rational arithmetic: the window \
             [-2(1 + d(2d-1)gamma), -2], the universal exponent (-d/2 in \
             d = 2,3; -2 with a log factor at d = 4; -2 beyond), and the \
             large-gamma target -d/2 + 4d^2/gamma.",
            "--in <series.csv> --nmin --nmax --d --gamma [--eps] [--mu]",
        ),
        "annealed" => (
            "Averages the return-probability series over independently sampled \
             fields. The average is indicative only: the continuous-time \
             anomaly t^-(gamma /\\ d/2) rests on waiting times that the \
             discrete-time jump chain does not have, so no exponent equality \
             is asserted.",
            "[--d] [--law] [--gamma] --grid | (--nmin --nmax) [--replicas] [--seed] [--gnuplot]",
        ),
        "pipeline anomalous" => (
            "Replays the trapping lower-bound chain on one field: finds the \
             rank of the first boundary hit whose collection is a trap, \
             checks the crossing bound w(x,y)/pi(x) >= 1/(4d N^a) and the \
             sojourn bound (xi/(xi + (2d-1)N^-a))^n at every trap, and \
             verifies on exact kernels that P^{2n}(0,0)/pi(0) >= \
             P_0(X_n in B)^2 / pi(B), the reversibility + Cauchy-Schwarz \
             inequality behind the anomalous decay exponent 2 + \
             d(4d-2)gamma/(1-eps).",
            "--N [--d] [--gamma] [--xi] [--eps] [--alpha] [--replicas] [--walk-cap] \
             [--plant-rank k] [--seed] [--tau]",
        ),
        _ => return None,
    };
    Some(format!("{text}\n\nflags: {flags}"))
}

pub const COMMANDS: &[&str] = &[
    "env sample",
    "env stat",
    "kernel return",
    "kernel dist",
    "walk simulate",
    "traps scan",
    "traps qn",
    "traps lambda",
    "iso profile",
    "iso mp",
    "iso check",
    "fit exponent",
    "report bounds",
    "annealed",
    "pipeline anomalous",
];
