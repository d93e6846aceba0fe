use trajinr::inr::{finetune_subject, read_inr, FitConfig};
use trajinr::phantom::CohortManifest;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(600);
    let frac: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(5e-4);
    let shared_pair_seed: bool = args.get(4).map(|s| s == "shared").unwrap_or(false);
    let out = format!("/tmp/probe_fits_{iters}_{frac}_{lr}_{shared_pair_seed}");
    std::fs::create_dir_all(&out).unwrap();

    let manifest: CohortManifest = serde_json::from_str(
        &std::fs::read_to_string("/tmp/deskrun2/cohort/manifest.json").unwrap()).unwrap();
    let star = read_inr("/tmp/deskrun2/fit/theta_star.inr".as_ref()).unwrap();
    let cfg = FitConfig {
        pretrain_iters: 1, pretrain_voxel_frac: 0.01, batch_subjects: 3,
        finetune_iters: iters, finetune_voxel_frac: frac, learning_rate: lr,
    };
    let t0 = std::time::Instant::now();
    for r in &manifest.test {
        let path = format!("{out}/{}.inr", r.record_id());
        if std::path::Path::new(&path).exists() { continue; }
        let label_bit = if r.record_id().contains("ad_like") { 1 } else { 0 };
        let idx = if shared_pair_seed { r.subject_index as u64 } else { (r.subject_index as u64) * 2 + label_bit };
        let seed = idx.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(7);
        let (theta, _) = finetune_subject(&star, r, &cfg, seed).unwrap();
        trajinr::inr::write_inr(&theta, path.as_ref()).unwrap();
        println!("fitted {} [{:?}]", r.record_id(), t0.elapsed());
    }

    // pair cosine per stream
    let ns: usize = star.spatial.iter().map(|m| m.len()).sum();
    let nt: usize = star.temporal.iter().map(|m| m.len()).sum();
    let nc: usize = star.combined.iter().map(|m| m.len()).sum();
    let mut subs: std::collections::BTreeMap<usize, [Option<Vec<f64>>; 2]> = Default::default();
    for r in &manifest.test {
        let f = read_inr(format!("{out}/{}.inr", r.record_id()).as_ref()).unwrap().flatten();
        let bit = if r.record_id().contains("ad_like") { 1 } else { 0 };
        subs.entry(r.subject_index).or_insert([None, None])[bit] = Some(f);
    }
    for (tag, lo, hi) in [("space", 0, ns), ("time", ns, ns + nt), ("combined", ns + nt, ns + nt + nc)] {
        let diffs: Vec<Vec<f64>> = subs.values().map(|p| {
            let h = p[0].as_ref().unwrap(); let a = p[1].as_ref().unwrap();
            (lo..hi).map(|i| a[i] - h[i]).collect()
        }).collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut cs = vec![];
        for i in 0..diffs.len() { for j in i + 1..diffs.len() {
            let dot: f64 = diffs[i].iter().zip(&diffs[j]).map(|(a, b)| a * b).sum();
            cs.push(dot / (norm(&diffs[i]) * norm(&diffs[j])));
        }}
        println!("{tag}: mean diff norm {:.4} mean pair cosine {:.4}",
            diffs.iter().map(|d| norm(d)).sum::<f64>() / diffs.len() as f64,
            cs.iter().sum::<f64>() / cs.len() as f64);
    }
}
