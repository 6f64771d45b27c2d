//! The acceptance suite: twelve numbered criteria, each reported as a
//! pass/fail line with a short numeric summary.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bnc::{
    catalan, enumerate_bnc, is_bnc, lower_interval, mobius_bnc, BncPartition, ChiWord, Side,
};
use crate::conjvar::{
    aaf_check, circular_entropy_experiment, conj_residual, fisher_info,
    fisher_minimization_experiment, parity_tau, perturbation_check, perturbed_semicircular,
    second_moment_sum, semicircular_entropy_experiment, ConjugateCandidate, EntropyExperiment,
    FisherExperiment, LiftedModel, PresenceContext,
};
use crate::fock::{
    make_bisemicircular, make_circular_pair, standard_bisemicircular, FockFactor, FockModel,
};
use crate::moments::{
    bifree_test, cumulant_pi, cumulants_from_moments, moments_from_cumulants,
    product_cumulant_expand, BifreeOptions, Factor, GeneratorSymbol, MomentFunctional, Monomial,
    PartitionTable,
};
use crate::opalgebra::{BElement, CPMap, Tolerance};

/// Outcome of one criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} [{:>2}] {} ({:.2} s): {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub seed: u64,
    pub tolerance: Tolerance,
    /// Budget for the whole suite, checked by the last criterion.
    pub time_budget_secs: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 2024,
            tolerance: Tolerance::default(),
            time_budget_secs: 300.0,
        }
    }
}

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "lattice counts"),
    (2, "Mobius function"),
    (3, "Mobius inversion round trip"),
    (4, "Fock exactness"),
    (5, "bi-semicircular cumulants"),
    (6, "bi-freeness detector"),
    (7, "conjugate variables"),
    (8, "perturbation law"),
    (9, "matrix lift and Fisher minimization"),
    (10, "entropy"),
    (11, "product-entry expansion"),
    (12, "suite runtime"),
];

type Outcome = Result<(bool, String), String>;

/// Runs every criterion in order.
pub fn run_all(cfg: &VerifyConfig) -> Vec<CriterionResult> {
    let start = Instant::now();
    let mut out: Vec<CriterionResult> = (1..=11).map(|id| run_criterion(id, cfg)).collect();
    let total = start.elapsed().as_secs_f64();
    out.push(CriterionResult {
        id: 12,
        name: CRITERIA[11].1.into(),
        pass: total < cfg.time_budget_secs,
        detail: format!(
            "criteria 1-11 {} the {:.0} s budget",
            if total < cfg.time_budget_secs {
                "finished within"
            } else {
                "exceeded"
            },
            cfg.time_budget_secs
        ),
        seconds: total,
    });
    out
}

/// Runs a single criterion (1 to 11; 12 needs the whole suite).
pub fn run_criterion(id: u8, cfg: &VerifyConfig) -> CriterionResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(id as u64));
    let outcome: Outcome = match id {
        1 => lattice_counts(&mut rng),
        2 => mobius_checks(&mut rng),
        3 => inversion_round_trip(&mut rng),
        4 => fock_exactness(),
        5 => semicircular_cumulants(&mut rng, cfg.tolerance),
        6 => bifreeness(cfg),
        7 => conjugate_variables(cfg.tolerance),
        8 => perturbation(cfg.tolerance),
        9 => matrix_lift(cfg.tolerance),
        10 => entropy(cfg.tolerance),
        11 => product_expansion(&mut rng, cfg.tolerance),
        _ => Err(format!("criterion {id} cannot run on its own")),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    let name = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map_or("unknown", |c| c.1)
        .to_string();
    CriterionResult {
        id,
        name,
        pass,
        detail,
        seconds,
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn random_chi(rng: &mut ChaCha8Rng, n: usize) -> ChiWord {
    ChiWord::new(
        (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Side::Left
                } else {
                    Side::Right
                }
            })
            .collect(),
    )
    .expect("n >= 1")
}

fn lattice_counts(rng: &mut ChaCha8Rng) -> Outcome {
    let start = Instant::now();
    let mut counts = Vec::new();
    let mut ok = true;
    for n in 1..=8 {
        for _ in 0..3 {
            let chi = random_chi(rng, n);
            let all = enumerate_bnc(&chi).map_err(err)?;
            ok &= all.len() as u64 == catalan(n);
            for p in all.iter().take(50) {
                ok &= is_bnc(p.partition(), &chi).map_err(err)?;
            }
        }
        counts.push(catalan(n).to_string());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        ok && secs < 10.0,
        format!(
            "counts {} for 3 side words each, under 10 s: {}",
            counts.join(","),
            secs < 10.0
        ),
    ))
}

fn mobius_checks(rng: &mut ChaCha8Rng) -> Outcome {
    let mut pairs = 0usize;
    let mut ok = true;
    for n in 1..=6 {
        let chi = random_chi(rng, n);
        let all = enumerate_bnc(&chi).map_err(err)?;
        for pi in &all {
            let below = lower_interval(pi);
            for sigma in &below {
                let mut sum = 0i64;
                for tau in &below {
                    if sigma.leq(tau).map_err(err)? {
                        sum += mobius_bnc(tau, pi).map_err(err)?;
                    }
                }
                ok &= sum == i64::from(sigma == pi);
                pairs += 1;
            }
        }
    }
    for n in 1..=7 {
        let chi = random_chi(rng, n);
        let mu =
            mobius_bnc(&BncPartition::zero(chi.clone()), &BncPartition::one(chi)).map_err(err)?;
        let sign = if n % 2 == 1 { 1 } else { -1 };
        ok &= mu == sign * catalan(n - 1) as i64;
    }
    let mut factor_ok = 0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=6);
        let chi = random_chi(rng, n);
        let all = enumerate_bnc(&chi).map_err(err)?;
        let pi = all.choose(rng).expect("nonempty").clone();
        let sigma = lower_interval(&pi).choose(rng).expect("nonempty").clone();
        let blocks = pi.blocks();
        let groups = rng.gen_range(1..=blocks.len());
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); groups];
        for (i, b) in blocks.iter().enumerate() {
            let g = if i < groups {
                i
            } else {
                rng.gen_range(0..groups)
            };
            parts[g].extend(b);
        }
        let mut product = 1i64;
        for mut v in parts {
            v.sort_unstable();
            product *= mobius_bnc(
                &sigma.restrict(&v).map_err(err)?,
                &pi.restrict(&v).map_err(err)?,
            )
            .map_err(err)?;
        }
        if product == mobius_bnc(&sigma, &pi).map_err(err)? {
            factor_ok += 1;
        }
    }
    ok &= factor_ok == 200;
    Ok((
        ok,
        format!("recursion on {pairs} pairs, closed form n<=7, factorization {factor_ok}/200"),
    ))
}

fn inversion_round_trip(rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut tables = 0;
    for d in 1..=2 {
        for n in 1..=6 {
            for _ in 0..3 {
                let chi = random_chi(rng, n);
                let mut table = PartitionTable::new(chi.clone());
                for p in enumerate_bnc(&chi).map_err(err)? {
                    table.insert(&p, BElement::random(d, rng)).map_err(err)?;
                }
                let kappa = cumulants_from_moments(&table).map_err(err)?;
                for (p, v) in table.entries().map_err(err)? {
                    worst = worst.max(moments_from_cumulants(&kappa, &p).map_err(err)?.dist(&v));
                }
                tables += 1;
            }
        }
    }
    Ok((
        worst <= 1e-10,
        format!("{tables} tables, max error {worst:.2e}"),
    ))
}

fn fock_exactness() -> Outcome {
    let m = standard_bisemicircular(1, 0);
    let mut worst: f64 = 0.0;
    for (k, expect) in [(1, 1.0), (2, 2.0), (3, 5.0)] {
        let w = Monomial::from_names(&vec!["S1"; 2 * k]);
        let v = m.moment(&w).map_err(err)?.as_scalar().unwrap_or_default();
        worst = worst.max((v - expect).norm());
    }
    let mut depth_ok = true;
    let mixed = make_bisemicircular(vec![CPMap::flip(), CPMap::identity(2)], vec![CPMap::flip()])
        .map_err(err)?;
    let word = [
        FockFactor::Annihilate(0),
        FockFactor::RightAnnihilate(2),
        FockFactor::Annihilate(1),
        FockFactor::Create(1),
        FockFactor::RightCreate(2),
        FockFactor::Create(0),
    ];
    let reference = mixed.space().expectation(&word).map_err(err)?;
    for n in [6, 7, 10] {
        let sp = mixed.space().clone().with_truncation(Some(n));
        depth_ok &= sp.expectation(&word).map_err(err)?.dist(&reference) == 0.0;
    }
    depth_ok &= mixed
        .space()
        .clone()
        .with_truncation(Some(2))
        .expectation(&word)
        .is_err();
    let mut truncated: FockModel = standard_bisemicircular(1, 0);
    truncated.set_truncation(Some(6));
    let m6 = truncated
        .moment(&Monomial::from_names(&["S1"; 6]))
        .map_err(err)?;
    depth_ok &= (m6.as_scalar().unwrap_or_default() - 5.0).norm() <= 1e-12;
    Ok((
        worst <= 1e-12 && depth_ok,
        format!("m2,m4,m6 max error {worst:.1e}; depth independence {depth_ok}"),
    ))
}

fn decorated(sym: &str, side: Side, b: Option<BElement>) -> Monomial {
    let mut m = Monomial::gen(sym);
    if let Some(b) = b {
        m.push(match side {
            Side::Left => Factor::Lb(b),
            Side::Right => Factor::Rb(b),
        });
    }
    m
}

fn semicircular_cumulants(rng: &mut ChaCha8Rng, tol: Tolerance) -> Outcome {
    let eta = CPMap::flip();
    let m = make_bisemicircular(vec![eta.clone()], vec![eta.clone()]).map_err(err)?;
    let ll = ChiWord::new(vec![Side::Left, Side::Left]).map_err(err)?;
    let lr = ChiWord::new(vec![Side::Left, Side::Right]).map_err(err)?;
    let rl = ChiWord::new(vec![Side::Right, Side::Left]).map_err(err)?;
    let mut covariance_err: f64 = 0.0;
    let mut cross: f64 = 0.0;
    for _ in 0..50 {
        let b = BElement::random(2, rng);
        let k = cumulant_pi(
            &m,
            &BncPartition::one(ll.clone()),
            &[
                decorated("S1", Side::Left, Some(b.clone())),
                Monomial::gen("S1"),
            ],
        )
        .map_err(err)?;
        covariance_err = covariance_err.max(k.dist(&eta.apply(&b).map_err(err)?));
        let k = cumulant_pi(
            &m,
            &BncPartition::one(lr.clone()),
            &[
                decorated("S1", Side::Left, Some(b.clone())),
                Monomial::gen("D1"),
            ],
        )
        .map_err(err)?;
        cross = cross.max(k.max_abs());
        let k = cumulant_pi(
            &m,
            &BncPartition::one(rl.clone()),
            &[decorated("D1", Side::Right, Some(b)), Monomial::gen("S1")],
        )
        .map_err(err)?;
        cross = cross.max(k.max_abs());
    }
    let mut other: f64 = 0.0;
    let mut tested = 0;
    for n in [1usize, 3, 4, 5] {
        for code in 0..(1usize << n) {
            let sides: Vec<Side> = (0..n)
                .map(|k| {
                    if code >> k & 1 == 0 {
                        Side::Left
                    } else {
                        Side::Right
                    }
                })
                .collect();
            let ops: Vec<Monomial> = sides
                .iter()
                .map(|&s| {
                    let name = if s == Side::Left { "S1" } else { "D1" };
                    decorated(name, s, Some(BElement::random(2, rng)))
                })
                .collect();
            let chi = ChiWord::new(sides).map_err(err)?;
            other = other.max(
                cumulant_pi(&m, &BncPartition::one(chi), &ops)
                    .map_err(err)?
                    .max_abs(),
            );
            tested += 1;
        }
    }
    Ok((
        tol.accepts(covariance_err) && tol.accepts(cross) && tol.accepts(other),
        format!(
            "|k(S Lb,S) - eta(b)| {covariance_err:.1e}; left-right {cross:.1e}; {tested} cumulants of order 1,3-5 max {other:.1e}"
        ),
    ))
}

fn bifreeness(cfg: &VerifyConfig) -> Outcome {
    let mut m = make_bisemicircular(
        vec![CPMap::flip(), CPMap::identity(2)],
        vec![CPMap::flip(), CPMap::identity(2)],
    )
    .map_err(err)?;
    for (name, fam) in [("S1", "A"), ("D1", "A"), ("S2", "B"), ("D2", "B")] {
        m.set_family(name, fam).map_err(err)?;
    }
    let opts = BifreeOptions {
        tolerance: cfg.tolerance,
        decorate: true,
        seed: cfg.seed,
    };
    let good = bifree_test(&m, 6, &opts).map_err(err)?;

    let planted = 0.7;
    let mut corr = standard_bisemicircular(1, 0);
    let one = num_complex::Complex64::new(planted, 0.0);
    corr.add_symbol(
        GeneratorSymbol::self_adjoint("T", Side::Left, "T"),
        vec![
            (one, vec![FockFactor::Create(0)]),
            (one, vec![FockFactor::Annihilate(0)]),
        ],
    )
    .map_err(err)?;
    let bad = bifree_test(&corr, 4, &BifreeOptions::default()).map_err(err)?;
    let order2 = bad
        .entries
        .iter()
        .filter(|e| e.order == 2)
        .map(|e| e.norm)
        .fold(0.0, f64::max);
    let detected = !bad.pass && (order2 - planted).abs() <= 1e-9;
    Ok((
        good.pass && detected,
        format!(
            "{} mixed cumulants up to order 6, max {:.1e}; correlated pair flagged with order-2 cumulant {order2:.12}",
            good.tested, good.max_residual
        ),
    ))
}

fn conjugate_variables(tol: Tolerance) -> Outcome {
    let m = standard_bisemicircular(2, 1);
    let id = CPMap::identity(1);
    let xi = ConjugateCandidate::scaled_generator("S1", Side::Left, "S1", 1.0);
    let self_res =
        conj_residual(&m, &xi, &id, &PresenceContext::new(&["S2"], &["D1"]), 6).map_err(err)?;
    let mut scale_res: f64 = 0.0;
    for lambda in [0.5, 2.0] {
        // z = λ·S1 with candidate z/λ² = S1/λ
        let (model, cand) = perturbed_semicircular(lambda * lambda, 0.0).map_err(err)?;
        scale_res = scale_res
            .max(conj_residual(&model, &cand, &id, &PresenceContext::default(), 6).map_err(err)?);
    }
    let phi = fisher_info(&m, std::slice::from_ref(&xi)).map_err(err)?;
    let cr = phi * second_moment_sum(&m, &["S1"]).map_err(err)?;
    Ok((
        tol.accepts(self_res) && tol.accepts(scale_res) && tol.accepts((phi - 1.0).abs()) && tol.accepts((cr - 1.0).abs()),
        format!("residual of S {self_res:.1e}, scaled {scale_res:.1e}, Phi* {phi:.12}, Cramer-Rao product {cr:.12}"),
    ))
}

fn perturbation(tol: Tolerance) -> Outcome {
    let rows = perturbation_check(&[0.0, 0.5, 1.0, 2.0, 10.0], 6).map_err(err)?;
    let gap = rows.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);
    let res = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let listing: Vec<String> = rows.iter().map(|r| format!("{}:{:.6}", r.0, r.1)).collect();
    Ok((
        tol.accepts(gap) && tol.accepts(res),
        format!(
            "Phi*(t) {}; max gap {gap:.1e}, residual {res:.1e}",
            listing.join(" ")
        ),
    ))
}

fn matrix_lift(tol: Tolerance) -> Outcome {
    let base = make_circular_pair();
    let lift = LiftedModel::lift_pair(&base, "cl", "cr").map_err(err)?;
    let reference = make_bisemicircular(vec![CPMap::flip()], vec![CPMap::flip()]).map_err(err)?;
    let mut law: f64 = 0.0;
    let mut parity: f64 = 0.0;
    for n in 1..=6usize {
        for code in 0..(1usize << n) {
            let sides: Vec<Side> = (0..n)
                .map(|k| {
                    if code >> k & 1 == 0 {
                        Side::Left
                    } else {
                        Side::Right
                    }
                })
                .collect();
            let lifted: Vec<&str> = sides
                .iter()
                .map(|s| if *s == Side::Left { "X" } else { "Y" })
                .collect();
            let plain: Vec<&str> = sides
                .iter()
                .map(|s| if *s == Side::Left { "S1" } else { "D1" })
                .collect();
            let e = lift.moment(&Monomial::from_names(&lifted)).map_err(err)?;
            law = law.max(
                e.dist(
                    &reference
                        .moment(&Monomial::from_names(&plain))
                        .map_err(err)?,
                ),
            );
            let chi = ChiWord::new(sides).map_err(err)?;
            parity = parity
                .max((e.trace_d() - parity_tau(&base, "cl", "cr", &chi).map_err(err)?).norm());
        }
    }
    let aaf = aaf_check(&base, "cl", "cr", 6, tol).map_err(err)?;
    let fisher = fisher_minimization_experiment(&FisherExperiment {
        tolerance: tol,
        ..Default::default()
    })
    .map_err(err)?;
    let scaled = fisher_minimization_experiment(&FisherExperiment {
        scale: 2.0,
        tolerance: tol,
        ..Default::default()
    })
    .map_err(err)?;
    let lhs_ok = (fisher.lhs - 4.0).abs() <= 1e-6 && (fisher.rhs - 2.0).abs() <= 1e-6;
    Ok((
        tol.accepts(law) && tol.accepts(parity) && aaf.pass && fisher.pass && scaled.pass && lhs_ok,
        format!(
            "lifted law vs flip semicircular {law:.1e}; parity {parity:.1e}; aaf max {:.1e}; Fisher {:.6}/{:.6} ratio {:.9} (scaled ratio {:.9}); residual {:.1e}",
            aaf.max_discrepancy, fisher.lhs, fisher.rhs, fisher.ratio, scaled.ratio, fisher.max_residual
        ),
    ))
}

fn entropy(tol: Tolerance) -> Outcome {
    let standard = semicircular_entropy_experiment(&EntropyExperiment {
        variance: 1.0,
        tolerance: tol,
        ..Default::default()
    })
    .map_err(err)?;
    let integrand = standard
        .details
        .get("max_abs_integrand")
        .copied()
        .unwrap_or(f64::NAN);
    let circ = circular_entropy_experiment(&EntropyExperiment {
        tolerance: tol,
        ..Default::default()
    })
    .map_err(err)?;
    let bracket = circ
        .details
        .get("lhs_bracket")
        .copied()
        .unwrap_or(f64::NAN)
        .max(circ.details.get("rhs_bracket").copied().unwrap_or(f64::NAN));
    Ok((
        standard.pass && integrand <= 1e-9 && circ.pass,
        format!(
            "semicircular {:.6} (bound {:.6}, integrand {integrand:.1e}); circular {:.6} = 2 x {:.6}, bracket {bracket:.1e}",
            standard.lhs, standard.rhs, circ.lhs, circ.rhs
        ),
    ))
}

fn product_expansion(rng: &mut ChaCha8Rng, tol: Tolerance) -> Outcome {
    let scalar = standard_bisemicircular(2, 2);
    let kraus = |rng: &mut ChaCha8Rng| {
        CPMap::from_kraus(vec![BElement::random(2, rng), BElement::random(2, rng)])
            .expect("same dimension")
    };
    let (l1, l2, r1, r2) = (kraus(rng), kraus(rng), kraus(rng), kraus(rng));
    let matrix = make_bisemicircular(vec![l1, l2], vec![r1, r2]).map_err(err)?;
    let mut worst: f64 = 0.0;
    let mut nontrivial = 0;
    for trial in 0..100 {
        let f: &FockModel = if trial % 2 == 0 { &scalar } else { &matrix };
        let d = f.dim();
        // words with an odd number of letters on either face mostly vanish,
        // so resample until both counts are even
        let (sizes, sides) = loop {
            let groups = rng.gen_range(1..=3usize);
            let sizes: Vec<usize> = (0..groups).map(|_| rng.gen_range(1..=2usize)).collect();
            let mut sides = Vec::new();
            for (g, &s) in sizes.iter().enumerate() {
                let shared = if rng.gen_bool(0.5) {
                    Side::Left
                } else {
                    Side::Right
                };
                for _ in 0..s {
                    let free = g + 1 == groups && rng.gen_bool(0.5);
                    sides.push(if free && rng.gen_bool(0.5) {
                        shared.opposite()
                    } else {
                        shared
                    });
                }
            }
            let lefts = sides.iter().filter(|&&s| s == Side::Left).count();
            if lefts % 2 == 0 && (sides.len() - lefts) % 2 == 0 {
                break (sizes, sides);
            }
        };
        let ops: Vec<Monomial> = sides
            .iter()
            .map(|&s| {
                let name = match (s, rng.gen_bool(0.9)) {
                    (Side::Left, true) => "S1",
                    (Side::Left, false) => "S2",
                    (Side::Right, true) => "D1",
                    (Side::Right, false) => "D2",
                };
                decorated(name, s, Some(BElement::random(d, rng)))
            })
            .collect();
        let chi_hat = ChiWord::new(sides).map_err(err)?;
        let r = product_cumulant_expand(f, &chi_hat, &sizes, &ops).map_err(err)?;
        worst = worst.max(r.residual);
        if r.grouped.max_abs() > 1e-6 {
            nontrivial += 1;
        }
    }
    Ok((
        tol.accepts(worst) && nontrivial >= 30,
        format!("100 instances (scalar and d=2, {nontrivial} with nonzero value), max residual {worst:.1e}"),
    ))
}
