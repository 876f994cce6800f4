use std::path::Path;

use fedsvm_core::data::{generate_synthetic, RoundsToTarget};
use fedsvm_core::fl::{client_update, ClientConfig, ClientVariant};
use fedsvm_core::harness::{
    compare_strategies, parse_config_str, run_experiment, run_seed, sv_sweep, RunConfig, ROUNDS_HEADER,
};
use fedsvm_core::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(dir: &Path, strategy: &str, extra_run: &str) -> RunConfig {
    let text = format!(
        r#"
[dataset]
kind = "synthetic"
num_clients = 12
num_classes = 4
feature_dim = 6
samples_mean = 20
samples_spread = 4
dirichlet_alpha = 0.3
class_separation = 4.0
noise_sigma = 1.0

[model]
hidden = [8]
embedding_dim = 4

[strategy]
name = "{strategy}"

[client]
batch_size = 8
learning_rate = 0.05

[run]
rounds = 6
clients_per_round = 4
target_accuracy = 0.5
seeds = [0, 1, 2]
output_dir = "out"
{extra_run}
"#
    );
    parse_config_str(&text, dir).unwrap()
}

#[test]
fn rounds_csv_schema_is_fixed() {
    assert_eq!(
        ROUNDS_HEADER.join(","),
        "seed,round,strategy,loss,accuracy,f1,mcc,lambda,sv_counts,ms"
    );
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "turbosvm", "");
    run_experiment(&c).unwrap();
    let text = std::fs::read_to_string(c.output_dir.join("rounds.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), ROUNDS_HEADER.join(","));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 10);
    assert_eq!(&first[..3], &["0", "1", "turbosvm"]);
    assert_eq!(first[7], "1");
    assert_eq!(first[8].split(';').count(), 4);
    assert_eq!(first[9], "");
    assert_eq!(text.lines().count(), 1 + 3 * 6);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = config(dir.path(), "moon", "");
    a.output_dir = dir.path().join("a");
    let mut b = a.clone();
    b.output_dir = dir.path().join("b");
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    for f in ["rounds.csv", "summary.csv", "summary.txt"] {
        assert_eq!(
            std::fs::read(a.output_dir.join(f)).unwrap(),
            std::fs::read(b.output_dir.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn wall_clock_column_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "fedavg", "record_wall_clock = true");
    let report = run_experiment(&c).unwrap();
    assert!(report.runs[0].records.iter().all(|r| r.ms.is_some_and(|ms| ms >= 0.0)));
}

#[test]
fn lone_client_round_returns_its_model() {
    let text = r#"
[dataset]
kind = "synthetic"
num_clients = 1
num_classes = 3
feature_dim = 4
samples_mean = 10
dirichlet_alpha = 1.0
class_separation = 3.0
noise_sigma = 1.0

[model]
hidden = [5]
embedding_dim = 3

[strategy]
name = "fedavg"

[client]
batch_size = 4

[run]
rounds = 1
clients_per_round = 1
target_accuracy = 0.5
seeds = [3]
"#;
    let dir = tempfile::tempdir().unwrap();
    let c = parse_config_str(text, dir.path()).unwrap();
    let run = run_seed(&c, 3, &mut |_| Ok(())).unwrap();
    assert_eq!(run.records[0].accuracy, None);

    // replay: same init stream, same sampling stream, one client seed
    let ds = generate_synthetic(&c.dataset.synthetic_spec(3).unwrap()).unwrap();
    let mut init = ChaCha8Rng::seed_from_u64(3);
    init.set_stream(1);
    let global = Model::init(4, &[5], 3, 3, &mut init).unwrap();
    let mut rounds = ChaCha8Rng::seed_from_u64(3);
    rounds.set_stream(2);
    fedsvm_core::fl::sample_clients(&[0], 1, &mut rounds).unwrap();
    let client_seed: u64 = rounds.gen();
    let cfg = ClientConfig {
        epochs: 1,
        batch_size: 4,
        learning_rate: 0.1,
        variant: ClientVariant::Vanilla,
    };
    let local = client_update(&global, &ds.clients()[0], &cfg, None, &mut ChaCha8Rng::seed_from_u64(client_seed)).unwrap();
    for (a, b) in run.final_model.flatten_params().data().iter().zip(local.model.flatten_params().data()) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn summary_matches_recomputation_from_rounds_csv() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "fedavg", "").with_seeds(vec![0, 1, 2, 3, 4]);
    run_experiment(&c).unwrap();
    let mut finals = Vec::new();
    let mut rdr = csv::Reader::from_path(c.output_dir.join("rounds.csv")).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if rec[1].parse::<usize>().unwrap() == c.rounds {
            finals.push(rec[4].parse::<f64>().unwrap());
        }
    }
    assert_eq!(finals.len(), 5);
    let mean = finals.iter().sum::<f64>() / 5.0;
    let std = (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    let mut rdr = csv::Reader::from_path(c.output_dir.join("summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let get = |label: &str| rows.iter().find(|r| &r[0] == label).unwrap()[3].parse::<f64>().unwrap();
    assert!((get("mean") - mean).abs() < 1e-12);
    assert!((get("std") - std).abs() < 1e-12);
}

#[test]
fn interrupted_csv_prefix_parses() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "fedaws", "");
    run_experiment(&c).unwrap();
    let bytes = std::fs::read(c.output_dir.join("rounds.csv")).unwrap();
    // every line boundary is a state the file passes through while streaming
    for cut in bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').map(|(i, _)| i + 1) {
        let mut rdr = csv::Reader::from_reader(&bytes[..cut]);
        assert_eq!(rdr.headers().unwrap().len(), 10);
        assert!(rdr.records().all(|r| r.is_ok()));
    }
}

#[test]
fn eval_stride_skips_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "fedavg", "eval_stride = 4");
    let report = run_experiment(&c).unwrap();
    let evaluated: Vec<usize> = report.runs[0]
        .records
        .iter()
        .filter(|r| r.accuracy.is_some())
        .map(|r| r.round)
        .collect();
    assert_eq!(evaluated, vec![4, 6]);
}

#[test]
fn compare_identities() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        config(dir.path(), "fedavg", ""),
        config(dir.path(), "fedavg", ""),
        config(dir.path(), "fedopt-sgd", ""),
    ];
    let out = dir.path().join("cmp");
    let (table, _) = compare_strategies(&configs, &out).unwrap();
    let avg = table.row("fedavg").unwrap();
    assert_eq!(table.row("fedavg-2").unwrap().csv_fields(6)[1..], avg.csv_fields(6)[1..]);
    assert_eq!(table.row("fedopt-sgd").unwrap().csv_fields(6)[1..], avg.csv_fields(6)[1..]);
    let text = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(text.starts_with("strategy,rounds_to_target_mean"));
    assert!(out.join("compare.txt").exists());

    let mut other = config(dir.path(), "fedavg", "");
    other.seeds = vec![9];
    assert!(compare_strategies(&[configs[0].clone(), other], &out).unwrap_err().is_config());
}

#[test]
fn crippled_strategy_reports_not_reached() {
    let dir = tempfile::tempdir().unwrap();
    let mut slow = config(dir.path(), "fedavg", "");
    slow.client.learning_rate = 1e-6;
    slow.target_accuracy = 0.95;
    let (table, reports) = compare_strategies(&[slow], &dir.path().join("cmp")).unwrap();
    assert!(reports[0].rounds_to_target().iter().all(|r| *r == RoundsToTarget::NotReached));
    assert_eq!(table.row("fedavg").unwrap().csv_fields(6)[1], ">6");
    assert!(table.render_text().contains(">6"));
}

#[test]
fn sweep_counts_bounded_by_participants() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), "turbosvm", "sv_round = 3");
    let cells = sv_sweep(&c, &[2, 4], &[3, 4], &dir.path().join("sweep")).unwrap();
    assert_eq!(cells.len(), 4);
    for cell in &cells {
        assert_eq!(cell.round, 3);
        assert!(cell.sv_counts.iter().all(|&n| (1..=cell.clients_per_round).contains(&n)));
    }
    let text = std::fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
    assert!(text.starts_with("d,C,round,sv_count,f1\n"));
    assert!(sv_sweep(&config(dir.path(), "fedavg", ""), &[2], &[3], dir.path()).is_err());
}
