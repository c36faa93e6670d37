use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use osmargin::cli;
use osmargin::config::{ConfigFile, RunConfig};
use osmargin::data;
use osmargin::models::Model;

fn osmargin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osmargin"))
        .args(args)
        .env_remove(cli::THREADS_ENV)
        .output()
        .expect("spawn osmargin")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Scratch {
    dir: tempfile::TempDir,
}

impl Scratch {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> String {
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn train_writes_all_artifacts_with_default_epochs() {
    let t = Scratch::new();
    let cfg = t.file("blobs_osm.cfg", "[data]\nsource = blobs\n");
    let out = t.path("run");
    let o = osmargin(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read(out.join("report.csv"));
    assert_eq!(report.lines().count(), 301);
    let (parsed, _) = data::parse_csv(&report).unwrap();
    assert_eq!(parsed.len(), 300);
    assert!(read(out.join("summary.txt")).contains("loss_kind = soft-osm"));
    let model = Model::load(&out.join("model.ckpt")).unwrap();
    assert_eq!(model.params().len(), 6);
}

#[test]
fn missing_dataset_path_exits_2_naming_the_field() {
    let t = Scratch::new();
    let cfg = t.file("bad.cfg", "[data]\nsource = csv\n");
    let o = osmargin(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("data.train"), "{}", stderr(&o));

    let cfg = t.file("bad2.cfg", "[data]\nsource = csv\ntrain = nowhere.csv\n");
    let o = osmargin(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("data.train"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_and_runtime_errors_exit_1() {
    let t = Scratch::new();
    let o = osmargin(&["train", "--config", s(&t.path("absent.cfg"))]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = t.file("typo.cfg", "[train]\nepoch = 3\n");
    assert_eq!(osmargin(&["train", "--config", s(&cfg)]).status.code(), Some(2));
    assert_eq!(osmargin(&["frobnicate"]).status.code(), Some(2));

    // binary cross-entropy on three classes fails inside training
    let cfg = t.file(
        "bce.cfg",
        "[data]\nclasses = 3\n[train]\nloss = binary-ce\nepochs = 2\n",
    );
    let o = osmargin(&["train", "--config", s(&cfg), "--out", s(&t.path("bce"))]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn loss_flag_is_recorded_in_summary() {
    let t = Scratch::new();
    let cfg = t.file("c.cfg", "[train]\nepochs = 3\n");
    let out = t.path("ce");
    let o = osmargin(&["train", "--config", s(&cfg), "--loss", "ce", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(out.join("summary.txt")).contains("loss_kind = ce"));
}

/// For each flag: a file value overridden by the flag must match a file
/// that holds the flag's value directly, and differ from the file value.
#[test]
fn every_flag_overrides_its_config_field() {
    let t = Scratch::new();
    let cases: [(&str, &str, &str, &str); 5] = [
        ("--seed", "[run]\nseed = {}\n", "1", "4"),
        ("--epochs", "[train]\nepochs = {}\n", "4", "7"),
        ("--loss", "[train]\nloss = {}\n", "hinge", "ce"),
        ("--batch-size", "[train]\nbatch_size = {}\n", "16", "50"),
        ("--lr", "[train]\nlr = {}\n", "0.01", "0.003"),
    ];
    for (flag, template, file_value, flag_value) in cases {
        let base = "[train]\nepochs = 5\n";
        let merge = |v: &str| {
            let field = template.replace("{}", v);
            if field.starts_with("[train]") {
                format!("{}{}", base, field.trim_start_matches("[train]\n")).replace("epochs = 5\nepochs", "epochs")
            } else {
                format!("{field}{base}")
            }
        };
        let run = |name: &str, text: String, extra: &[&str]| {
            let cfg = t.file(&format!("{name}.cfg"), &text);
            let out = t.path(name);
            let mut args = vec!["train", "--config", s(&cfg), "--out", s(&out)];
            args.extend_from_slice(extra);
            let o = osmargin(&args);
            assert!(o.status.success(), "{flag}: {}", stderr(&o));
            read(out.join("report.csv")) + &read(out.join("model.ckpt"))
        };
        let tag = flag.trim_start_matches("--");
        let overridden = run(&format!("{tag}-flag"), merge(file_value), &[flag, flag_value]);
        let direct = run(&format!("{tag}-direct"), merge(flag_value), &[]);
        let file_only = run(&format!("{tag}-file"), merge(file_value), &[]);
        assert_eq!(overridden, direct, "{flag} did not take effect");
        assert_ne!(overridden, file_only, "{flag} had no observable effect");
    }
}

#[test]
fn out_and_repeat_flags_override_config() {
    let t = Scratch::new();
    let from_file = t.path("from-file");
    let cfg = t.file(
        "c.cfg",
        &format!(
            "[run]\nout = {}\nrepeat = 1\n[train]\nepochs = 3\n[compare]\nlosses = soft-osm\n",
            from_file.display()
        ),
    );
    let flagged = t.path("flagged");
    let o = osmargin(&["compare", "--config", s(&cfg), "--out", s(&flagged), "--repeat", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(flagged.join("compare.csv").is_file());
    assert!(!from_file.exists());

    let mut file = ConfigFile::load(&cfg).unwrap();
    file.set("run.repeat", "2").unwrap();
    let expected = cli::compare_table(&RunConfig::from_file(&file).unwrap()).unwrap().to_csv();
    assert_eq!(read(flagged.join("compare.csv")), expected);
}

#[test]
fn set_flag_reaches_any_key() {
    let t = Scratch::new();
    let cfg = t.file("c.cfg", "[train]\nepochs = 2\n");
    let out = t.path("o");
    let o = osmargin(&["train", "--config", s(&cfg), "--set", "train.epochs=6", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(out.join("report.csv")).lines().count(), 7);
    let o = osmargin(&["train", "--config", s(&cfg), "--set", "train.nonsense=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_emits_rejected_rows_and_refuses_empty_grids() {
    let t = Scratch::new();
    let cfg = t.file(
        "sweep.cfg",
        "[train]\nepochs = 5\n[sweep]\nalpha = 0.01, 0.1, 1, 5, 10\nmargins = 100:100\n",
    );
    let out = t.path("sweep");
    let o = osmargin(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("lambda_max must exceed lambda_min"));
    let csv = read(out.join("sweep.csv"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows[5].starts_with("margins,0.1,1,100,100,-1,0,1"), "{}", rows[5]);
    data::parse_csv(&csv).unwrap();

    let empty = t.file("empty.cfg", "[train]\nepochs = 5\n");
    assert_eq!(osmargin(&["sweep", "--config", s(&empty)]).status.code(), Some(2));
}

#[test]
fn compare_layout_follows_loss_count() {
    let t = Scratch::new();
    let three = t.file(
        "three.cfg",
        "[train]\nepochs = 5\n[compare]\nlosses = osm, ce, hinge\ndatasets = blobs, rings\n",
    );
    let out = t.path("three");
    assert!(osmargin(&["compare", "--config", s(&three), "--out", s(&out)]).status.success());
    let csv = read(out.join("compare.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], "# loss,blobs,blobs_range,rings,rings_range");
    assert!(lines[4].starts_with("improvement,"));
    data::parse_csv(&csv).unwrap();

    let one = t.file("one.cfg", "[train]\nepochs = 5\n[compare]\nlosses = ce\n");
    let out = t.path("one");
    assert!(osmargin(&["compare", "--config", s(&one), "--out", s(&out)]).status.success());
    assert_eq!(read(out.join("compare.csv")).lines().count(), 2);
}

#[test]
fn repeated_cells_are_seed_means() {
    let text = "[run]\nrepeat = 3\n[data]\nsource = rings\nn_per_class = 40\n[model]\nkind = mlp\nhidden = 4\n[train]\nepochs = 4\n[compare]\nlosses = soft-osm, ce\n";
    let mut file = ConfigFile::parse(text).unwrap();
    let pooled = cli::compare_table(&RunConfig::from_file(&file).unwrap()).unwrap();
    file.set("run.repeat", "1").unwrap();
    for (i, seed) in (0..3).enumerate() {
        file.set("run.seed", &seed.to_string()).unwrap();
        let single = cli::compare_table(&RunConfig::from_file(&file).unwrap()).unwrap();
        for loss in 0..2 {
            assert_eq!(pooled.accuracies[loss][0][i], single.accuracies[loss][0][0]);
        }
    }
    let (mean, _) = cli::mean_range(&pooled.accuracies[0][0]);
    assert_eq!(pooled.mean(0, 0), mean);
}

#[test]
fn ocr_compare_reports_both_model_sizes() {
    let t = Scratch::new();
    let cfg = t.file(
        "ocr.cfg",
        "[run]\ntask = ocr\n[data]\ncount = 20\n[train]\nepochs = 3\n[ocr]\nfull_hidden = 8\nscaled_hidden = 2\n",
    );
    let out = t.path("ocr");
    let o = osmargin(&["ocr-compare", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(out.join("ocr.csv"));
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("full,8,"));
    assert!(rows[1].starts_with("scaled-down,2,"));
    assert_eq!(rows[0].split(',').count(), 7);
    data::parse_csv(&csv).unwrap();

    let classification = t.file("cls.cfg", "[train]\nepochs = 1\n");
    assert_eq!(osmargin(&["ocr-compare", "--config", s(&classification)]).status.code(), Some(2));
}

#[test]
fn ocr_train_uses_sequence_loop() {
    let t = Scratch::new();
    let cfg = t.file("ocr.cfg", "[run]\ntask = ocr\n[data]\ncount = 10\n[train]\nepochs = 2\nloss = ctc\n");
    let out = t.path("o");
    let o = osmargin(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(out.join("summary.txt")).contains("loss_kind = ctc"));
    // ctc emits one extra output for the blank
    assert_eq!(Model::load(&out.join("model.ckpt")).unwrap().config().outputs(), 5);
}

#[test]
fn gradcheck_exit_codes() {
    let o = osmargin(&["gradcheck", "--count", "30", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 10);
    assert!(stdout.contains("osm-ctc-model"));

    let o = osmargin(&["gradcheck", "--count", "0"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn thread_cap_is_honored_and_validated() {
    let t = Scratch::new();
    let cfg = t.file(
        "c.cfg",
        "[run]\nrepeat = 2\n[train]\nepochs = 3\n[sweep]\nalpha = 0.1, 1\n",
    );
    let run = |threads: Option<&str>, name: &str| {
        let out = t.path(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_osmargin"));
        cmd.args(["sweep", "--config", s(&cfg), "--out", s(&out)]);
        match threads {
            Some(v) => cmd.env(cli::THREADS_ENV, v),
            None => cmd.env_remove(cli::THREADS_ENV),
        };
        let o = cmd.output().unwrap();
        (o.status.code(), fs::read_to_string(out.join("sweep.csv")).ok())
    };
    let (code_one, one) = run(Some("1"), "one");
    let (code_four, four) = run(Some("4"), "four");
    let (code_default, default) = run(None, "default");
    assert_eq!((code_one, code_four, code_default), (Some(0), Some(0), Some(0)));
    assert_eq!(one, four);
    assert_eq!(one, default);
    let (code, _) = run(Some("lots"), "bad");
    assert_eq!(code, Some(2));
}

#[test]
fn csv_datasets_train_with_shared_label_order() {
    let t = Scratch::new();
    let train = t.file(
        "train.csv",
        "# label,x,y\n7,10,0\n3,-10,0\n7,9,1\n3,-9,-1\n7,11,-1\n3,-11,1\n",
    );
    // eval lists the classes in the opposite order
    let eval = t.file("eval.csv", "3,-10,0.5\n7,10,0.5\n");
    let cfg = t.file(
        "csv.cfg",
        &format!(
            "[data]\nsource = csv\ntrain = {}\neval = {}\n[train]\nepochs = 60\nbatch_size = 2\n",
            train.display(),
            eval.display()
        ),
    );
    let out = t.path("csv");
    let o = osmargin(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read(out.join("summary.txt")).contains("final_eval_accuracy = 1"));

    let stranger = t.file("stranger.csv", "5,0,0\n");
    let cfg = t.file(
        "stranger.cfg",
        &format!(
            "[data]\nsource = csv\ntrain = {}\neval = {}\n[train]\nepochs = 1\n",
            train.display(),
            stranger.display()
        ),
    );
    assert_eq!(osmargin(&["train", "--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn bundled_configs_resolve() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            RunConfig::load(&path, &[]).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
