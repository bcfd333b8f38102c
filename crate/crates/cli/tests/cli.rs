use std::collections::HashSet;
use std::process::{Command, Output};

use gwgen::{decode_bits, Algo, BitSource, GenParams, Generator};

fn gwgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwgen"))
        .args(args)
        .env_remove("GW_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_lines(o: &Output) -> Vec<String> {
    stdout(o).lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect()
}

#[test]
fn generate_bits_writes_a_header_and_valid_words() {
    let o = gwgen(&["generate", "--algo", "naive", "--seed", "7", "--count", "1", "--format", "bits"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("# seed=7"));
    let lines = data_lines(&o);
    assert_eq!(lines.len(), 1);
    assert!(decode_bits(&lines[0]).is_ok());
}

#[test]
fn parallel_output_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for w in ["1", "8"] {
        let path = dir.path().join(format!("w{w}.txt"));
        let o = gwgen(&[
            "generate", "--algo", "parallel", "--threshold", "2", "--workers", w, "--seed", "11", "--count", "40",
            "--out", path.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        files.push(std::fs::read(path).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn stats_rows_round_trip_with_bits() {
    let bits = gwgen(&["generate", "--seed", "3", "--count", "50", "--max-nodes", "100"]);
    let stats = gwgen(&["generate", "--seed", "3", "--count", "50", "--max-nodes", "100", "--format", "stats"]);
    let words = data_lines(&bits);
    let rows: Vec<Vec<String>> = data_lines(&stats)
        .iter()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 50);
    let trees: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == "tree").collect();
    assert_eq!(trees.len(), words.len());
    assert!(rows.iter().any(|r| r[1] == "overflow"), "some tree should exceed 100 nodes");
    for (w, r) in words.iter().zip(trees) {
        let t = decode_bits(w).unwrap();
        assert_eq!(r[2], t.size().to_string());
        assert_eq!(r[3], t.height_nodes().to_string());
        assert_eq!(r[4], t.left_spine().to_string());
        assert_eq!(r[5], r[2], "one bit per node");
    }
}

#[test]
fn dot_output_for_a_three_node_tree() {
    let mut gen = Generator::new(GenParams::new(Algo::Iterative)).unwrap();
    let seed = (0u64..)
        .find(|&s| gen.generate_from(BitSource::new(s, &[0])).unwrap().tree().unwrap().encode_bits() == "100")
        .unwrap();
    let seed = seed.to_string();
    let o = gwgen(&["generate", "--seed", &seed, "--format", "dot"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("digraph"));
    assert_eq!(text.lines().filter(|l| l.contains("->")).count(), 2);
    assert_eq!(text.lines().filter(|l| l.contains("[shape")).count(), 3);
}

#[test]
fn sample_sizes_and_shapes() {
    let o = gwgen(&["sample", "--size", "1", "--count", "4", "--seed", "1"]);
    assert_eq!(data_lines(&o), vec!["0"; 4]);

    let o = gwgen(&["sample", "--size", "9", "--count", "14000", "--seed", "2"]);
    let shapes: HashSet<String> = data_lines(&o).into_iter().collect();
    assert!(shapes.len() >= 13);
    assert!(shapes.iter().all(|w| w.len() == 9 && decode_bits(w).is_ok()));

    let o = gwgen(&[
        "sample", "--size", "21", "--count", "200", "--method", "rejection", "--algo", "hybrid", "--threshold", "2",
        "--hybrid-switch", "4", "--workers", "3", "--seed", "5",
    ]);
    assert!(o.status.success());
    assert!(data_lines(&o).iter().all(|w| decode_bits(w).unwrap().size() == 21));

    let start = std::time::Instant::now();
    let o = gwgen(&["sample", "--size", "2001", "--count", "1000", "--method", "cycle", "--seed", "3"]);
    assert!(o.status.success());
    assert_eq!(data_lines(&o).len(), 1000);
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["sample", "--size", "8"][..],
        &["verify", "peak", "--sizes", "1000", "--seed", "1"],
        &["generate", "--threshold", "0", "--seed", "1"],
        &["generate", "--algo", "iterative", "--rng-mode", "per-worker", "--seed", "1"],
        &["bench", "--repeats", "0"],
        &["oracle", "pmf", "--size", "23"],
        &["generate", "--format", "nope"],
    ] {
        assert_eq!(gwgen(args).status.code(), Some(2), "{args:?}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_gwgen"))
        .args(["generate", "--algo", "parallel", "--seed", "1"])
        .env("GW_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_suites_report_csv_verdicts() {
    let o = gwgen(&["verify", "lifetime", "--threshold", "1", "--seed", "1", "--sizes", "1,3,5,7,9,11,13,15"]);
    assert!(o.status.success());
    let lines = data_lines(&o);
    assert_eq!(lines[0], "check,observed,reference,tolerance,verdict");
    assert!(lines[1..].iter().all(|l| l.ends_with(",pass")));

    let o = gwgen(&["verify", "lifetime", "--threshold", "2", "--seed", "1", "--sizes", "5"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("k=5:1vs2"));

    let o = gwgen(&["verify", "determinism", "--seed", "4", "--samples", "3", "--threshold", "8"]);
    assert!(o.status.success());

    // Ten samples cannot satisfy a 0.01 distance bound, so the verdict fails.
    let o = gwgen(&["verify", "lifetime", "--seed", "1", "--sizes", "2001", "--samples", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains(",fail"));
}

#[test]
fn oracle_tables() {
    let o = gwgen(&["oracle", "tnk", "--size", "7", "--threshold", "1"]);
    let rows = data_lines(&o);
    assert_eq!(rows[0], "n,k,closed_form,brute_force,match");
    assert_eq!(&rows[1..], ["7,2,2,2,true", "7,3,2,2,true", "7,4,1,1,true"]);

    let o = gwgen(&["oracle", "tnk", "--size", "5", "--threshold", "2"]);
    assert_eq!(&data_lines(&o)[1..], ["5,5,1,2,false"]);

    let o = gwgen(&["oracle", "pmf", "--size", "7", "--threshold", "2"]);
    assert_eq!(&data_lines(&o)[1..], ["7,5,1/5,0.200000000000", "7,7,4/5,0.800000000000"]);

    let o = gwgen(&["oracle", "limit", "--threshold", "4", "--kmax", "50"]);
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("11,1/512,")));
    let tail = text.lines().last().unwrap();
    assert!(tail.starts_with("# mass=0.387407449470"), "{tail}");
    assert!(tail.ends_with("mean=69"));
}

#[test]
fn bench_writes_one_row_per_repeat() {
    let o = gwgen(&[
        "bench", "--algos", "iterative,parallel", "--sizes", "20000", "--workers", "1,2", "--thresholds", "16",
        "--repeats", "5",
    ]);
    assert!(o.status.success());
    let rows = data_lines(&o);
    assert_eq!(rows[0], "algo,n,workers,threshold,seed,repeat,seconds,median_seconds,nodes,nodes_per_sec");
    // iterative once, parallel for each worker count
    assert_eq!(rows.len() - 1, 3 * 5);
    let iterative = rows.iter().filter(|r| r.starts_with("iterative,")).count();
    assert_eq!(iterative, 5);
}
