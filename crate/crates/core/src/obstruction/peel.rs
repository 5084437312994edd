use crate::rational::{fmt_q, q_int, q_pow, q_to_f64, serde_q, serde_q_vec, Q};
use crate::sequences::ParamSequence;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::intervals::{largest_gap, Interval};
use super::ObstructionError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstructionParams {
    #[serde(with = "serde_q")]
    pub q: Q,
    pub m: usize,
    #[serde(with = "serde_q")]
    pub delta: Q,
    #[serde(rename = "A", with = "serde_q")]
    pub a: Q,
    #[serde(rename = "N")]
    pub n: usize,
}

/// Smallest `m` with `q^m >= 2(m+1)`, `δ = (1/16)/(1 + 1/q + … + 1/q^{m-1})`,
/// `A = q^{2(m-1)} + 4δ + 1` and the first `N` with `1/λ_N <= |I|`.
pub fn choose_obstruction_params(
    q: &Q,
    interval: &Interval,
    seq: &ParamSequence,
) -> Result<ObstructionParams, ObstructionError> {
    if *q <= Q::one() {
        return Err(ObstructionError::InvalidArgument("q must be > 1".into()));
    }
    if !interval.len().is_positive() {
        return Err(ObstructionError::InvalidArgument("interval must have positive length".into()));
    }
    let mut m = 1usize;
    while q_pow(q, m as u64) < q_int(2 * (m as i64 + 1)) {
        m += 1;
    }
    let delta = Q::new(1.into(), 16.into()) / geometric_sum(q, m);
    let a = q_pow(q, 2 * (m as u64 - 1)) + q_int(4) * &delta + Q::one();
    let target = interval.len().recip();
    let n = seq
        .first_at_least(&target, 0, 1 << 40)
        .ok_or_else(|| ObstructionError::PreconditionViolated("no term reaches 1/|I|".into()))?;
    Ok(ObstructionParams { q: q.clone(), m, delta, a, n })
}

/// `1 + 1/q + … + 1/q^{m-1}`.
fn geometric_sum(q: &Q, m: usize) -> Q {
    let inv = q.recip();
    let mut term = Q::one();
    let mut sum = Q::zero();
    for _ in 0..m {
        sum += &term;
        term *= &inv;
    }
    sum
}

/// Lists every displayed constraint the parameters fail (empty when valid).
pub fn check_params(p: &ObstructionParams, interval: &Interval, seq: &ParamSequence) -> Vec<String> {
    let mut out = Vec::new();
    if q_pow(&p.q, p.m as u64) < q_int(2 * (p.m as i64 + 1)) {
        out.push(format!("q^m < 2(m+1) for m = {}", p.m));
    }
    if &p.delta * geometric_sum(&p.q, p.m) >= Q::new(1.into(), 8.into()) {
        out.push("delta(1 + 1/q + ... + 1/q^(m-1)) >= 1/8".into());
    }
    if (&p.a - q_int(4) * &p.delta) / q_pow(&p.q, 2 * (p.m as u64 - 1)) <= Q::one() {
        out.push("(A - 4 delta)/q^(2(m-1)) <= 1".into());
    }
    if seq.value(p.n).recip() > interval.len() {
        out.push("1/lambda_N > |I|".into());
    }
    out
}

/// Inserts geometric intermediate terms so every consecutive ratio of the
/// result lies in `[q, q²]`.
pub fn densify(seq: &ParamSequence, q: &Q, horizon: usize) -> Result<ParamSequence, ObstructionError> {
    densify_step(seq, q, horizon, 1)
}

/// Same as [`densify`] applied to the `step`-spaced subsequence
/// `λ_0, λ_step, λ_{2 step}, …`, for sequences whose growth is only visible
/// over several indices.
pub fn densify_step(seq: &ParamSequence, q: &Q, horizon: usize, step: usize) -> Result<ParamSequence, ObstructionError> {
    if *q <= Q::one() || step == 0 {
        return Err(ObstructionError::InvalidArgument("need q > 1 and step >= 1".into()));
    }
    let last = seq.clamp(horizon) / step;
    let q2 = q * q;
    let mut out = vec![seq.value(0)];
    for k in 0..last {
        let cur = seq.value(k * step);
        let next = seq.value((k + 1) * step);
        let r = &next / &cur;
        if r < *q {
            return Err(ObstructionError::RatioTooSmall { index: k * step, ratio: fmt_q(&r) });
        }
        let mut t = 0u64;
        let mut rest = r.clone();
        while rest > q2 {
            rest /= q;
            t += 1;
        }
        let mut v = cur;
        for _ in 0..t {
            v *= q;
            out.push(v.clone());
        }
        out.push(next);
    }
    ParamSequence::table(out).map_err(|e| ObstructionError::InvalidArgument(e.to_string()))
}

/// Centers `y_{n,k}` of one level `n`, in the order `k = 1, 2, …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateFamily {
    pub n: usize,
    #[serde(with = "serde_q_vec")]
    pub centers: Vec<Q>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeelStage {
    pub j: usize,
    /// Window `J` of length exactly `1/λ_{N+m(j-1)}` taken from the previous survivor.
    pub window: Option<Interval>,
    /// At most one merged interval per level met the window.
    pub removed: Vec<(usize, Interval)>,
    pub survivor: Interval,
    #[serde(with = "serde_q")]
    pub length: Q,
    /// `1/λ_{N+mj}`.
    #[serde(with = "serde_q")]
    pub bound: Q,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeelCertificate {
    pub params: ObstructionParams,
    pub interval: Interval,
    pub stages: Vec<PeelStage>,
    /// Levels `N..=last_level` were peeled.
    pub last_level: Option<usize>,
    pub candidate_points: usize,
    /// A point of `I` outside every ball `B(y_{n,k}, δ/λ_n)`.
    #[serde(with = "serde_q")]
    pub uncovered_point: Q,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refutation {
    pub hypothesis: String,
    pub detail: String,
    /// Offending `(n, k)` pair, when the failure involves two centers.
    pub pair: Option<[(usize, usize); 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PeelOutcome {
    Certificate(PeelCertificate),
    Refutation(Refutation),
}

fn refute(hypothesis: &str, detail: String, pair: Option<[(usize, usize); 2]>) -> PeelOutcome {
    PeelOutcome::Refutation(Refutation { hypothesis: hypothesis.into(), detail, pair })
}

/// First pair `(n,k), (m,j)` with `δ <= |λ_n y_{n,k} - λ_m y_{m,j}| <= A`.
fn dichotomy_violation(
    seq: &ParamSequence,
    candidate: &[CandidateFamily],
    delta: &Q,
    a: &Q,
) -> Option<([(usize, usize); 2], Q)> {
    let mut pts: Vec<(f64, Q, (usize, usize))> = Vec::new();
    for fam in candidate {
        let lam = seq.value(fam.n);
        for (k, y) in fam.centers.iter().enumerate() {
            let v = &lam * y;
            pts.push((q_to_f64(&v), v, (fam.n, k)));
        }
    }
    pts.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
    let reach = q_to_f64(a) * (1.0 + 1e-9) + 1e-9;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let slack = 1e-12 * (pts[i].0.abs() + pts[j].0.abs());
            if pts[j].0 - pts[i].0 > reach + slack {
                break;
            }
            let d = (&pts[j].1 - &pts[i].1).abs();
            if d >= *delta && d <= *a {
                return Some(([pts[i].2, pts[j].2], d));
            }
        }
    }
    None
}

/// Greedy merged intervals of one level: `J'` closed with half-width
/// `δ/λ_n`, `J` open with half-width `2δ/λ_n`.
fn merged_intervals(lam: &Q, centers: &[Q], delta: &Q) -> Vec<Interval> {
    let r1 = delta / lam;
    let r2 = q_int(2) * &r1;
    let mut inner: Vec<Interval> = Vec::new();
    let mut outer = Vec::new();
    for y in centers {
        if inner.iter().any(|jp| jp.contains(y)) {
            continue;
        }
        inner.push(Interval::closed(y - &r1, y + &r1));
        outer.push(Interval::open(y - &r2, y + &r2));
    }
    outer
}

/// Runs the peeling induction against `candidate`. Levels are processed
/// `m` at a time until every candidate level is consumed and at least
/// `min_stages` stages exist.
pub fn peel_certify(
    seq: &ParamSequence,
    interval: &Interval,
    candidate: &[CandidateFamily],
    params: &ObstructionParams,
    min_stages: usize,
) -> Result<PeelOutcome, ObstructionError> {
    let (n0, m) = (params.n, params.m);
    let q = &params.q;
    for w in candidate.windows(2) {
        if w[1].n <= w[0].n {
            return Err(ObstructionError::MalformedCandidate("levels must be strictly increasing".into()));
        }
    }
    for fam in candidate {
        if fam.n < n0 {
            return Err(ObstructionError::MalformedCandidate(format!("level {} below N = {n0}", fam.n)));
        }
        if let Some(y) = fam.centers.iter().find(|y| !interval.contains(y)) {
            return Err(ObstructionError::MalformedCandidate(format!("center {} outside {interval}", fmt_q(y))));
        }
    }
    let bad = check_params(params, interval, seq);
    if !bad.is_empty() {
        return Ok(refute("parameters", bad.join("; "), None));
    }
    if let Some((pair, d)) = dichotomy_violation(seq, candidate, &params.delta, &params.a) {
        return Ok(refute(
            "separation dichotomy",
            format!("|lambda_n y - lambda_m y'| = {} lies in [delta, A]", fmt_q(&d)),
            Some(pair),
        ));
    }

    let last_level = candidate.last().map(|f| f.n);
    let needed = last_level.map_or(0, |l| (l + 1 - n0).div_ceil(m));
    let total = needed.max(min_stages);
    let q2 = q * q;
    for n in n0..n0 + m * total {
        let r = seq.value(n + 1) / seq.value(n);
        if r < *q || r > q2 {
            return Ok(refute("ratio window", format!("lambda[{n}+1]/lambda[{n}] = {} not in [q, q^2]", fmt_q(&r)), None));
        }
    }

    let levels: std::collections::BTreeMap<usize, Vec<Interval>> = candidate
        .iter()
        .map(|f| (f.n, merged_intervals(&seq.value(f.n), &f.centers, &params.delta)))
        .collect();

    let mut survivor = interval.clone();
    let mut stages = vec![PeelStage {
        j: 0,
        window: None,
        removed: vec![],
        survivor: survivor.clone(),
        length: survivor.len(),
        bound: seq.value(n0).recip(),
    }];
    for j in 0..total {
        let start = n0 + m * j;
        let width = seq.value(start).recip();
        let window = Interval {
            lo: survivor.lo.clone(),
            hi: &survivor.lo + &width,
            lo_closed: survivor.lo_closed,
            hi_closed: survivor.hi_closed || &survivor.lo + &width < survivor.hi,
        };
        let mut removed = Vec::new();
        for n in start..start + m {
            let Some(js) = levels.get(&n) else { continue };
            let hits: Vec<&Interval> = js.iter().filter(|jn| jn.intersects(&window)).collect();
            if hits.len() > 1 {
                return Ok(refute(
                    "one interval per level",
                    format!("{} merged intervals of level {n} meet the window {window}", hits.len()),
                    None,
                ));
            }
            if let Some(h) = hits.first() {
                removed.push((n, (*h).clone()));
            }
        }
        let cuts: Vec<Interval> = removed.iter().map(|(_, i)| i.clone()).collect();
        let next = match largest_gap(&window, &cuts) {
            Ok(g) => g,
            Err(e) => return Ok(refute("window length", e.to_string(), None)),
        };
        let bound = seq.value(start + m).recip();
        if next.len() < bound {
            return Ok(refute(
                "survivor length",
                format!("stage {} survivor has length {} < {}", j + 1, fmt_q(&next.len()), fmt_q(&bound)),
                None,
            ));
        }
        stages.push(PeelStage {
            j: j + 1,
            window: Some(window),
            removed,
            survivor: next.clone(),
            length: next.len(),
            bound,
        });
        survivor = next;
    }

    let x = (&survivor.lo + &survivor.hi) / q_int(2);
    for fam in candidate {
        let r = &params.delta / seq.value(fam.n);
        for y in &fam.centers {
            assert!((&x - y).abs() >= r, "surviving point is covered");
        }
    }
    let candidate_points = candidate.iter().map(|f| f.centers.len()).sum();
    Ok(PeelOutcome::Certificate(PeelCertificate {
        params: params.clone(),
        interval: interval.clone(),
        stages,
        last_level: if total == 0 { None } else { Some(n0 + m * total - 1) },
        candidate_points,
        uncovered_point: x,
    }))
}

/// Seeded candidate over `levels` consecutive levels from `N` that respects
/// the separation dichotomy, mixing random, clustered and lattice centers.
pub fn adversarial_candidate(
    seq: &ParamSequence,
    interval: &Interval,
    params: &ObstructionParams,
    levels: usize,
    seed: u64,
) -> Vec<CandidateFamily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = interval.len();
    let af = q_to_f64(&params.a);
    let mut accepted: Vec<(f64, Q)> = Vec::new();
    let mut out = Vec::new();
    let scale = Q::from_integer(num_bigint::BigInt::one() << 32u32);
    let random_point = |rng: &mut ChaCha8Rng| -> Q {
        let u: u32 = rng.gen();
        &interval.lo + &len * Q::from_integer(u.into()) / &scale
    };
    for n in params.n..params.n + levels {
        let lam = seq.value(n);
        let mut proposals: Vec<Q> = Vec::new();
        let lattice_count = q_to_f64(&(&len * &lam)) / (af + 1.0);
        match rng.gen_range(0..3) {
            0 if lattice_count <= 400.0 => {
                let spacing = (&params.a + Q::one()) / &lam;
                let shift: u32 = rng.gen();
                let mut y = &interval.lo + &spacing * Q::from_integer(shift.into()) / &scale;
                while y <= interval.hi {
                    proposals.push(y.clone());
                    y += &spacing;
                }
            }
            1 => {
                for _ in 0..rng.gen_range(1..=4) {
                    let y = random_point(&mut rng);
                    let t: u32 = rng.gen();
                    let near = &y + &params.delta / (q_int(2) * &lam) * Q::from_integer(t.into()) / &scale;
                    proposals.push(y);
                    proposals.push(near);
                }
            }
            _ => {
                for _ in 0..rng.gen_range(0..=6) {
                    proposals.push(random_point(&mut rng));
                }
            }
        }
        let mut centers = Vec::new();
        for y in proposals {
            if !interval.contains(&y) {
                continue;
            }
            let v = &lam * &y;
            let vf = q_to_f64(&v);
            let ok = accepted.iter().all(|(wf, w)| {
                if (vf - wf).abs() > af * (1.0 + 1e-9) + 1e-9 + 1e-12 * (vf.abs() + wf.abs()) {
                    return true;
                }
                let d = (&v - w).abs();
                d < params.delta || d > params.a
            });
            if ok {
                accepted.push((vf, v));
                centers.push(y);
            }
        }
        if !centers.is_empty() {
            out.push(CandidateFamily { n, centers });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q_frac;

    fn pow2() -> ParamSequence {
        ParamSequence::geometric(q_int(2), 1).unwrap()
    }

    #[test]
    fn params_for_q2_and_q10() {
        let i = Interval::closed(q_int(1), q_int(2));
        let p = choose_obstruction_params(&q_int(2), &i, &pow2()).unwrap();
        assert_eq!(p.m, 3);
        assert_eq!(p.delta, q_frac(1, 28));
        assert!(check_params(&p, &i, &pow2()).is_empty());
        let ten = ParamSequence::geometric(q_int(10), 1).unwrap();
        assert_eq!(choose_obstruction_params(&q_int(10), &i, &ten).unwrap().m, 1);
    }

    #[test]
    fn densify_cases() {
        let s = pow2();
        let d = densify(&s, &q_int(2), 20).unwrap();
        assert_eq!(d.len(), Some(21));
        let s8 = ParamSequence::geometric(q_int(8), 1).unwrap();
        let d8 = densify(&s8, &q_int(2), 10).unwrap();
        for i in 0..d8.len().unwrap() - 1 {
            let r = d8.ratio(i);
            assert!(r >= q_int(2) && r <= q_int(4));
        }
        assert!(matches!(
            densify(&ParamSequence::integers(), &q_int(2), 10),
            Err(ObstructionError::RatioTooSmall { .. })
        ));
        // n² grows by at least 2 only every few steps; the 3-step subsequence works from 1 on.
        let sq = ParamSequence::polynomial(2.0, 1).unwrap();
        assert!(densify_step(&sq, &q_frac(3, 2), 3, 3).is_ok());
    }

    #[test]
    fn empty_candidate_certifies() {
        let i = Interval::closed(q_int(1), q_int(2));
        let p = choose_obstruction_params(&q_int(2), &i, &pow2()).unwrap();
        match peel_certify(&pow2(), &i, &[], &p, 0).unwrap() {
            PeelOutcome::Certificate(c) => assert_eq!(c.stages.len(), 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dichotomy_breach_is_named() {
        let i = Interval::closed(q_int(1), q_int(2));
        let s = pow2();
        let p = choose_obstruction_params(&q_int(2), &i, &s).unwrap();
        // λ_N = 2: centers 1 and 1 + 1/2 give scaled distance 1, inside [δ, A].
        let cand = vec![CandidateFamily { n: p.n, centers: vec![q_int(1), q_frac(3, 2)] }];
        match peel_certify(&s, &i, &cand, &p, 0).unwrap() {
            PeelOutcome::Refutation(r) => assert_eq!(r.pair, Some([(p.n, 0), (p.n, 1)])),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn adversarial_candidates_are_peeled() {
        let i = Interval::closed(q_int(1), q_int(2));
        let s = pow2();
        let p = choose_obstruction_params(&q_int(2), &i, &s).unwrap();
        for seed in 0..3 {
            let cand = adversarial_candidate(&s, &i, &p, 3 * p.m, seed);
            match peel_certify(&s, &i, &cand, &p, 3).unwrap() {
                PeelOutcome::Certificate(c) => {
                    for st in &c.stages {
                        assert!(st.length >= st.bound);
                    }
                }
                other => panic!("{other:?}"),
            }
        }
    }
}
