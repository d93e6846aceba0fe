use trajinr::classifier::{
    classify_matrix, stack_stream_params, train_classifier, ClassifierConfig, StreamMatrix,
    StreamSelection,
};
use trajinr::inr::{read_inr, InrParams};
use trajinr::trajectory::Label;

fn load(dir: &str, names: &[(&str, Label)]) -> Vec<(InrParams, Label)> {
    names
        .iter()
        .map(|(n, l)| (read_inr(format!("{dir}/{n}.inr").as_ref()).unwrap(), *l))
        .collect()
}

fn main() {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string("/tmp/deskrun2/cohort/manifest.json").unwrap())
            .unwrap();
    let rec_names = |split: &str| -> Vec<(String, Label)> {
        manifest[split]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                let label = if r["label"] == "ad_like" { Label::AdLike } else { Label::Healthy };
                (format!("{}-{}", r["subject_id"].as_str().unwrap(),
                    r["label"].as_str().unwrap()), label)
            })
            .collect()
    };
    let train_names = rec_names("train");
    let test_names = rec_names("test");
    let tn: Vec<(&str, Label)> = train_names.iter().map(|(n, l)| (n.as_str(), *l)).collect();
    let sn: Vec<(&str, Label)> = test_names.iter().map(|(n, l)| (n.as_str(), *l)).collect();
    let train = load("/tmp/deskrun2/fit", &tn);
    let test = load("/tmp/deskrun2/fit", &sn);
    let stream = std::env::args().nth(5).unwrap_or("time".into());
    let sel = if stream == "space" { StreamSelection::new(true, false, false).unwrap() } else { StreamSelection::new(false, true, false).unwrap() };
    let train_mats: Vec<(StreamMatrix, Label)> = train
        .iter()
        .map(|(p, l)| (stack_stream_params(p, sel, "x").unwrap(), *l))
        .collect();
    let test_mats: Vec<(StreamMatrix, Label)> = test
        .iter()
        .map(|(p, l)| (stack_stream_params(p, sel, "x").unwrap(), *l))
        .collect();
    let n_ad = train.iter().filter(|(_, l)| *l == Label::AdLike).count();
    println!("train {} ({} ad) test {}", train.len(), n_ad, test.len());

    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(100);
    let batch: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(8);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1);
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let mut cfg = ClassifierConfig::desk();
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    if let Some(d) = std::env::args().nth(6) {
        cfg.dropout = d.parse().unwrap();
    }
    let items: Vec<(&StreamMatrix, Label)> = train_mats.iter().map(|(m, l)| (m, *l)).collect();
    let t0 = std::time::Instant::now();
    let (model, history) = train_classifier(&items, &cfg, seed).unwrap();
    let mut correct = 0;
    for (m, l) in &test_mats {
        if classify_matrix(&model, m).unwrap().1 == *l { correct += 1; }
    }
    for h in history.iter().step_by((epochs / 20).max(1)) {
        println!("epoch {} loss {:.4} train_acc {:.1}", h.epoch, h.loss, h.train_acc);
    }
    println!("final train_acc {:.1} test {}/{} ({:.1}%)  [{:?}]",
        history.last().unwrap().train_acc, correct, test_mats.len(),
        100.0 * correct as f64 / test_mats.len() as f64, t0.elapsed());
    for (m, l) in train_mats.iter().take(4) {
        let lat = trajinr::classifier::encode(&model, m).unwrap();
        let nz = lat.iter().filter(|&&x| x > 0.0).count();
        let lmax = lat.iter().cloned().fold(f64::MIN, f64::max);
        let (p, _) = classify_matrix(&model, m).unwrap();
        println!("  label {:?} prob {:.6} latent nonzero {}/{} max {:.4}", l, p, nz, lat.len(), lmax);
    }
    // head hidden-layer health: count positive hidden units for one latent
    let lat = trajinr::classifier::encode(&model, &train_mats[0].0).unwrap();
    let hw = &model.head1; // aug mat [(latent+1) x hidden]
    let hidden = hw.cols;
    let mut pos = 0;
    for j in 0..hidden {
        let mut s = 0.0;
        for (i, &x) in lat.iter().enumerate() { s += x * hw.data[i * hidden + j]; }
        s += hw.data[lat.len() * hidden + j];
        if s > 0.0 { pos += 1; }
    }
    println!("  head hidden positive units: {pos}/{hidden}");
}
