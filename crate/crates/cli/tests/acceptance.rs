//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own PASS/FAIL line; the process fails if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use idcl_core::assignment::{
    density_core, hard_labels, soft_assign, soft_assign_to_cores, target_distribution,
};
use idcl_core::curriculum::pace;
use idcl_core::data::{load_optdigits, synth_blobs};
use idcl_core::density::difficulty_measurer;
use idcl_core::kmeans::{lloyd_best_of, KMeansConfig};
use idcl_core::metrics::{clustering_accuracy, hungarian, nmi};
use idcl_core::objective::{clustering_loss, loss_grad_wrt_kernel_sums};
use idcl_core::pipeline::{evaluate, gradient_self_check, run_training};
use idcl_core::{ClusterState, CoreSet, EmbeddedMatrix, PaceSchedule, RngStream, RunConfig};
use ndarray::{Array1, Array2};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("pacing properties", pacing),
        ("gradient fidelity", gradient_fidelity),
        ("kernel-sum gradient identity", kernel_sum_identity),
        ("normalization invariants", normalization),
        ("oracle equivalences", oracles),
        ("blobs end-to-end", blobs),
        ("digits improvement over k-means", digits),
        ("density cores fix a centroid misassignment", boundary_point),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS {name} ({detail}; {secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {name} ({detail}; {secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> std::result::Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("{what} took {took:?}, limit {limit:?}"))
}

fn pacing() -> Check {
    let start = Instant::now();
    let s = PaceSchedule::new(0.6, 0.95, 50).map_err(|e| e.to_string())?;
    ensure(pace(0, &s) == 0.6, || format!("pace(0) = {}", pace(0, &s)))?;
    let mid = pace(25, &s);
    ensure((mid - 0.6f64.sqrt()).abs() < 1e-12, || format!("pace(25) = {mid}"))?;
    for t in 0..200 {
        ensure(pace(t + 1, &s) >= pace(t, &s), || format!("pace decreases at {t}"))?;
    }
    ensure(pace(200, &s) == 0.95, || "no saturation at zeta_max".into())?;
    for t in 0..49 {
        let d0 = s.uncapped(t + 1) - s.uncapped(t);
        let d1 = s.uncapped(t + 2) - s.uncapped(t + 1);
        ensure(d1 >= d0, || format!("forward difference shrinks at t = {t}"))?;
    }
    within(start, Duration::from_secs(1), "pacing")?;
    Ok("pace(25) matches sqrt(0.6)".into())
}

fn gradient_fidelity() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let configs = 25;
    for seed in 0..configs {
        let g = gradient_self_check(seed).map_err(|e| e.to_string())?;
        ensure(g.n <= 8 && g.dim <= 16 && g.k <= 3, || format!("instance too large: {g:?}"))?;
        ensure(g.network.checked > 0, || format!("seed {seed}: no network coordinate checked"))?;
        worst = worst.max(g.max_error());
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    within(start, Duration::from_secs(30), "gradient checks")?;
    Ok(format!("{configs} configurations, max relative error {worst:.2e}"))
}

fn kernel_sum_identity() -> Check {
    let mut rng = RngStream::new(11);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = 2 + rng.below(7);
        let k = 2 + rng.below(3);
        let d = Array2::from_shape_fn((n, k), |_| rng.uniform_in(0.1, 3.0));
        let row_normalize = |d: &Array2<f64>| {
            let sums = d.sum_axis(ndarray::Axis(1));
            let mut q = d.clone();
            for (mut row, s) in q.rows_mut().into_iter().zip(sums.iter()) {
                row /= *s;
            }
            q
        };
        let q = row_normalize(&d);
        let p = target_distribution(&q).map_err(|e| e.to_string())?;
        let analytic = loss_grad_wrt_kernel_sums(&q, &p, &d);
        let loss = |d: &Array2<f64>| -> f64 {
            let q = row_normalize(d);
            p.iter().zip(q.iter()).map(|(&pv, &qv)| pv * (pv / qv).ln()).sum()
        };
        let mut work = d.clone();
        for idx in ndarray::indices(d.dim()) {
            let h = 1e-5 * d[idx];
            work[idx] = d[idx] + h;
            let up = loss(&work);
            work[idx] = d[idx] - h;
            let down = loss(&work);
            work[idx] = d[idx];
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic[idx].abs().max(numeric.abs());
            let err = if scale > 0.0 { (analytic[idx] - numeric).abs() / scale } else { 0.0 };
            worst = worst.max(err);
        }
    }
    ensure(worst < 1e-6, || format!("max relative error {worst:e}"))?;
    Ok(format!("10 instances, max relative error {worst:.2e}"))
}

fn random_state(rng: &mut RngStream) -> (EmbeddedMatrix, ClusterState) {
    let n = 2 + rng.below(29);
    let dim = 1 + rng.below(10);
    let k = 1 + rng.below(4.min(n));
    let z = Array2::from_shape_fn((n, dim), |_| rng.normal() * 3.0);
    let z = EmbeddedMatrix::new(z).unwrap();
    // Every cluster gets at least one member.
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.below(k) }).collect();
    rng.shuffle(&mut labels);
    let profile = difficulty_measurer(&z, 0.02).unwrap();
    let state = ClusterState::new(labels, k, &profile.rho, 0.05).unwrap();
    (z, state)
}

fn normalization() -> Check {
    let mut rng = RngStream::new(4);
    let mut worst_sum: f64 = 0.0;
    let mut distinct = 0;
    for case in 0..1000 {
        let (z, state) = random_state(&mut rng);
        let q = soft_assign(&z, &state).map_err(|e| e.to_string())?;
        let p = target_distribution(&q).map_err(|e| e.to_string())?;
        for m in [&q, &p] {
            for row in m.rows() {
                worst_sum = worst_sum.max((row.sum() - 1.0).abs());
            }
        }
        let kl = clustering_loss(&p, &q).map_err(|e| e.to_string())?;
        ensure(kl >= 0.0, || format!("case {case}: KL = {kl}"))?;
        let self_kl = clustering_loss(&q, &q).map_err(|e| e.to_string())?;
        ensure(self_kl.abs() <= 1e-12, || format!("case {case}: KL(Q|Q) = {self_kl:e}"))?;
        let gap = p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-12 {
            distinct += 1;
            ensure(kl > 0.0, || format!("case {case}: P != Q but KL = 0"))?;
        } else {
            ensure(kl <= 1e-12, || format!("case {case}: P = Q but KL = {kl:e}"))?;
        }
    }
    ensure(worst_sum <= 1e-9, || format!("row sum off by {worst_sum:e}"))?;
    Ok(format!("1000 states ({distinct} with P != Q), worst row-sum error {worst_sum:.1e}"))
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn best_partition_inertia(z: &Array2<f64>, k: usize) -> f64 {
    let n = z.nrows();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        if counts.iter().all(|&c| c > 0) {
            let mut total = 0.0;
            for c in 0..k {
                let rows: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                let mean: Array1<f64> =
                    rows.iter().map(|&i| z.row(i).to_owned()).fold(Array1::zeros(z.ncols()), |a, r| a + r)
                        / rows.len() as f64;
                for &i in &rows {
                    total += (&z.row(i) - &mean).mapv(|v| v * v).sum();
                }
            }
            best = best.min(total);
        }
        // Odometer over all k^n labelings.
        let mut pos = 0;
        while pos < n {
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
        if pos == n {
            return best;
        }
    }
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

fn direct_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &joint {
        let pxy = c as f64 / n;
        mi += pxy * (pxy * n * n / (ca[&x] as f64 * cb[&y] as f64)).ln();
    }
    let (ha, hb) = (entropy(ca.values().copied(), n), entropy(cb.values().copied(), n));
    if ha == 0.0 && hb == 0.0 {
        1.0
    } else {
        mi / ha.max(hb)
    }
}

fn oracles() -> Check {
    let mut rng = RngStream::new(5);

    for case in 0..200 {
        let k = 1 + case % 7;
        let cost = Array2::from_shape_fn((k, k), |_| rng.below(50) as f64);
        let (_, got) = hungarian(&cost).map_err(|e| e.to_string())?;
        let best = permutations(k)
            .iter()
            .map(|p| p.iter().enumerate().map(|(r, &c)| cost[[r, c]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        ensure(got == best, || format!("hungarian case {case}: {got} vs {best}"))?;
    }

    let cfg = KMeansConfig::default();
    let mut worst_gap: f64 = 0.0;
    for case in 0..40 {
        let n = 3 + rng.below(6);
        let k = 1 + rng.below(3);
        let z = Array2::from_shape_fn((n, 2), |_| rng.uniform_in(-5.0, 5.0));
        let fit = lloyd_best_of(z.view(), k, 50, &mut rng, &cfg).map_err(|e| e.to_string())?;
        let gap = fit.inertia - best_partition_inertia(&z, k);
        worst_gap = worst_gap.max(gap.abs());
        ensure(gap < 1e-9, || format!("lloyd case {case}: inertia gap {gap:e}"))?;
    }

    let mut worst_rho: f64 = 0.0;
    for _ in 0..50 {
        let n = 2 + rng.below(19);
        let dim = 1 + rng.below(5);
        let z = Array2::from_shape_fn((n, dim), |_| rng.normal());
        let sq: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (&z.row(i) - &z.row(j)).mapv(|v| v * v).sum())
            .collect();
        let mut pool: Vec<f64> = sq.iter().map(|v| v.sqrt()).collect();
        pool.sort_by(f64::total_cmp);
        let rank = ((0.02 * (n * n) as f64).ceil() as usize).max(1);
        let mut dc = pool[rank - 1];
        if dc == 0.0 {
            dc = pool.iter().copied().find(|&v| v > 0.0).unwrap_or(1.0);
        }
        let emb = EmbeddedMatrix::new(z.clone()).unwrap();
        let profile = difficulty_measurer(&emb, 0.02).map_err(|e| e.to_string())?;
        ensure((profile.dc - dc).abs() <= 1e-12 * dc, || format!("dc {} vs {dc}", profile.dc))?;
        for i in 0..n {
            let direct: f64 = (0..n).map(|j| (-sq[i * n + j] / (dc * dc)).exp()).sum();
            worst_rho = worst_rho.max((profile.rho[i] - direct).abs() / direct);
        }
    }
    ensure(worst_rho < 1e-12, || format!("density relative error {worst_rho:e}"))?;

    let mut worst_nmi: f64 = 0.0;
    for _ in 0..100 {
        let n = 1 + rng.below(60);
        let (ka, kb) = (1 + rng.below(6), 1 + rng.below(6));
        let a: Vec<usize> = (0..n).map(|_| rng.below(ka)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.below(kb)).collect();
        let got = nmi(&a, &b).map_err(|e| e.to_string())?;
        worst_nmi = worst_nmi.max((got - direct_nmi(&a, &b)).abs());
    }
    ensure(worst_nmi < 1e-10, || format!("nmi error {worst_nmi:e}"))?;

    Ok(format!(
        "hungarian 200/200 exact, lloyd gap {worst_gap:.1e}, density {worst_rho:.1e}, nmi {worst_nmi:.1e}"
    ))
}

fn blobs() -> Check {
    let start = Instant::now();
    let mut rng = RngStream::new(7);
    let data = synth_blobs(300, 3, 16, 20.0, 1.0, &mut rng).map_err(|e| e.to_string())?;
    let truth = data.require_labels().map_err(|e| e.to_string())?;
    let fit = lloyd_best_of(data.x.view(), 3, 10, &mut RngStream::new(7), &KMeansConfig::default())
        .map_err(|e| e.to_string())?;
    let separable = clustering_accuracy(truth, &fit.labels).map_err(|e| e.to_string())?;
    ensure(separable >= 0.99, || format!("k-means oracle ACC {separable}: instance not separable"))?;

    let cfg = RunConfig {
        k: 3,
        seed: 7,
        ..RunConfig::default()
    };
    let out = run_training(&cfg, &data).map_err(|e| e.to_string())?;
    let eval = evaluate(&out.labels, &data).map_err(|e| e.to_string())?;
    let epochs = out.history.len();
    let detail = format!("ACC {:.4} NMI {:.4}, {epochs} epochs, converged {}", eval.acc, eval.nmi, out.converged);
    ensure(eval.acc >= 0.98 && eval.nmi >= 0.95, || detail.clone())?;
    ensure(out.converged && epochs <= 200, || detail.clone())?;
    within(start, Duration::from_secs(120), "blobs run")?;
    Ok(detail)
}

fn digits() -> Check {
    let start = Instant::now();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/optdigits.tes");
    let data = load_optdigits(&path).map_err(|e| e.to_string())?;
    let truth = data.require_labels().map_err(|e| e.to_string())?;
    let base = lloyd_best_of(data.x.view(), 10, 10, &mut RngStream::new(0), &KMeansConfig::default())
        .map_err(|e| e.to_string())?;
    let base_acc = clustering_accuracy(truth, &base.labels).map_err(|e| e.to_string())?;
    let base_nmi = nmi(truth, &base.labels).map_err(|e| e.to_string())?;

    let cfg = RunConfig {
        k: 10,
        seed: 7,
        ..RunConfig::default()
    };
    let out = run_training(&cfg, &data).map_err(|e| e.to_string())?;
    let eval = evaluate(&out.labels, &data).map_err(|e| e.to_string())?;
    let detail = format!(
        "ACC {:.4} NMI {:.4} vs k-means ACC {base_acc:.4} NMI {base_nmi:.4}, {} epochs",
        eval.acc,
        eval.nmi,
        out.history.len()
    );
    ensure(eval.acc >= base_acc + 0.05 && eval.nmi >= base_nmi, || detail.clone())?;
    within(start, Duration::from_secs(15 * 60), "digits run")?;
    Ok(detail)
}

fn boundary_point() -> Check {
    // Cluster A: a dense core around 0 with a sparse tail reaching -40 that
    // drags its centroid left. Cluster B: compact around 12. The boundary
    // point at 4 belongs to A's core region.
    let mut xs: Vec<f64> = (0..20).map(|i| -0.5 + i as f64 / 19.0).collect();
    xs.extend([-20.0, -25.0, -30.0, -35.0, -40.0]);
    let boundary = xs.len();
    xs.push(4.0);
    let a_len = xs.len();
    xs.extend((0..10).map(|i| 11.7 + 0.6 * i as f64 / 9.0));
    let truth: Vec<usize> = (0..xs.len()).map(|i| usize::from(i >= a_len)).collect();

    let z = EmbeddedMatrix::new(Array2::from_shape_vec((xs.len(), 1), xs.clone()).unwrap()).unwrap();
    let centroid = |c: usize| {
        let m: Vec<f64> = xs.iter().zip(&truth).filter(|(_, &t)| t == c).map(|(x, _)| *x).collect();
        m.iter().sum::<f64>() / m.len() as f64
    };
    let (ca, cb) = (centroid(0), centroid(1));
    let x = xs[boundary];
    let by_centroid = usize::from((x - cb).abs() < (x - ca).abs());
    ensure(by_centroid == 1, || format!("geometry broken: centroid rule keeps the point ({ca}, {cb})"))?;

    let profile = difficulty_measurer(&z, 0.02).map_err(|e| e.to_string())?;
    let state = ClusterState::new(truth.clone(), 2, &profile.rho, 0.05).map_err(|e| e.to_string())?;
    let members = state.members();
    let core_a = density_core(&members[0], &profile.rho, 0.05).map_err(|e| e.to_string())?;
    ensure(core_a.iter().all(|&i| xs[i].abs() <= 0.5), || format!("core of A not in its dense part: {core_a:?}"))?;
    let cores = CoreSet::gather(&z, &state).map_err(|e| e.to_string())?;
    let q = soft_assign_to_cores(z.view(), &cores).map_err(|e| e.to_string())?;
    let labels = hard_labels(&q);
    ensure(labels[boundary] == 0, || format!("density cores assign it to B (q = {:?})", q.row(boundary)))?;
    ensure(labels == truth, || "density cores misassign other points".into())?;
    Ok(format!(
        "centroids {ca:.2} / {cb:.2} pick B, cores pick A with q = {:.3}",
        q[[boundary, 0]]
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |args: &[&str]| -> std::result::Result<(), String> {
        let o = Command::new(env!("CARGO_BIN_EXE_idcl"))
            .args(args)
            .current_dir(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    };
    run(&["blobs", "--n", "120", "--k", "3", "--dim", "8", "--seed", "2", "--out", "d.csv"])?;
    fs::write(
        dir.path().join("c.toml"),
        "[run]\nk = 3\nseed = 13\nmax_iter = 15\n\n[model]\nwidths = [32, 32]\nbottleneck = 4\n\n[optim]\npretrain_epochs = 10\nbatch_size = 32\n",
    )
    .map_err(|e| e.to_string())?;
    run(&["train", "--data", "d.csv", "--config", "c.toml", "--out", "a"])?;
    run(&["train", "--data", "d.csv", "--config", "c.toml", "--out", "b"])?;
    let a = fs::read(dir.path().join("a.metrics.jsonl")).map_err(|e| e.to_string())?;
    let b = fs::read(dir.path().join("b.metrics.jsonl")).map_err(|e| e.to_string())?;
    ensure(!a.is_empty(), || "empty metrics".into())?;
    ensure(a == b, || "metrics differ between runs".into())?;
    Ok(format!("{} records byte-identical", a.iter().filter(|&&c| c == b'\n').count()))
}
