use trajinr::inr::read_inr;

fn main() {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string("/tmp/deskrun2/cohort/manifest.json").unwrap()).unwrap();
    let probe = read_inr("/tmp/deskrun2/fit/theta_star.inr".as_ref()).unwrap();
    let ns: usize = probe.spatial.iter().map(|m| m.len()).sum();
    let nt: usize = probe.temporal.iter().map(|m| m.len()).sum();
    let nc: usize = probe.combined.iter().map(|m| m.len()).sum();
    // collect test subjects -> (healthy flat, ad flat)
    let mut subs: std::collections::BTreeMap<String, [Option<Vec<f64>>; 2]> = Default::default();
    for r in manifest["test"].as_array().unwrap() {
        let sid = r["subject_id"].as_str().unwrap().to_string();
        let lab = r["label"].as_str().unwrap();
        let name = format!("{sid}-{lab}");
        let f = read_inr(format!("/tmp/deskrun2/fit/{name}.inr").as_ref()).unwrap().flatten();
        let e = subs.entry(sid).or_insert([None, None]);
        e[if lab == "ad_like" { 1 } else { 0 }] = Some(f);
    }
    for (tag, lo, hi) in [("space", 0, ns), ("time", ns, ns + nt), ("combined", ns + nt, ns + nt + nc)] {
        let diffs: Vec<Vec<f64>> = subs.values().map(|pair| {
            let h = pair[0].as_ref().unwrap();
            let a = pair[1].as_ref().unwrap();
            (lo..hi).map(|i| a[i] - h[i]).collect()
        }).collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut cs = vec![];
        for i in 0..diffs.len() { for j in i + 1..diffs.len() {
            let dot: f64 = diffs[i].iter().zip(&diffs[j]).map(|(a, b)| a * b).sum();
            cs.push(dot / (norm(&diffs[i]) * norm(&diffs[j])));
        }}
        let mean_cos = cs.iter().sum::<f64>() / cs.len() as f64;
        let mean_norm = diffs.iter().map(|d| norm(d)).sum::<f64>() / diffs.len() as f64;
        println!("{tag}: mean pair-diff norm {mean_norm:.4}, mean pairwise cosine {mean_cos:.4} (n={})", cs.len());
    }
}
