use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pyrcodec::ppm::{read_ppm, write_ppm};
use pyrcodec::Image;

fn pyrcodec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pyrcodec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Gradient with a little deterministic texture.
fn test_image(h: usize, w: usize, c: usize, b: u8) -> Image {
    let max = (1u32 << b) - 1;
    let samples = (0..h * w * c)
        .map(|i| {
            let (r, col, ch) = (i / (w * c), (i / c) % w, i % c);
            let v = (r * 3 + col * 2 + ch * 40) as u32 * max / (3 * h + 2 * w + 80) as u32;
            (v ^ ((i as u32).wrapping_mul(2654435761) >> 29)).min(max) as u16
        })
        .collect();
    Image::new(w, h, c, b, samples).unwrap()
}

fn save(dir: &Path, name: &str, img: &Image) -> PathBuf {
    let p = dir.join(name);
    write_ppm(&p, img).unwrap();
    p
}

#[test]
fn decompose_reconstruct_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (name, img) in [
        ("rgb.ppm", test_image(64, 32, 3, 8)),
        ("gray.pgm", test_image(16, 16, 1, 5)),
        ("deep.ppm", test_image(8, 24, 3, 16)),
    ] {
        let input = save(dir.path(), name, &img);
        let cont = dir.path().join("c.ppyr");
        let back = dir.path().join(format!("back_{name}"));
        let o = pyrcodec(&["decompose", s(&input), s(&cont)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = pyrcodec(&["reconstruct", s(&cont), s(&back)]);
        assert!(o.status.success());
        assert_eq!(read_ppm(&back).unwrap(), img);
        assert_eq!(fs::read(&back).unwrap(), fs::read(&input).unwrap());
    }
}

#[test]
fn auto_levels_reach_a_four_by_four_grid() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "a.ppm", &test_image(256, 256, 3, 8));
    let o = pyrcodec(&["decompose", s(&input), s(&dir.path().join("c"))]);
    let out = stdout(&o);
    assert!(out.contains("L = 12"), "{out}");
    assert!(out.contains("coarsest 4x4x3"), "{out}");

    let tiny = save(dir.path(), "t.ppm", &test_image(4, 4, 3, 8));
    let o = pyrcodec(&["decompose", s(&tiny), s(&dir.path().join("t"))]);
    assert!(stdout(&o).contains("L = 0"));
}

#[test]
fn odd_width_and_bad_containers_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let odd = save(dir.path(), "odd.ppm", &test_image(8, 7, 3, 8));
    let o = pyrcodec(&[
        "decompose",
        s(&odd),
        s(&dir.path().join("c")),
        "--levels",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let input = save(dir.path(), "a.ppm", &test_image(16, 16, 3, 8));
    let cont = dir.path().join("c.ppyr");
    assert!(pyrcodec(&["decompose", s(&input), s(&cont)])
        .status
        .success());
    let data = fs::read(&cont).unwrap();

    let cut = dir.path().join("cut");
    fs::write(&cut, &data[..data.len() / 2]).unwrap();
    let o = pyrcodec(&["reconstruct", s(&cut), s(&dir.path().join("x.ppm"))]);
    assert_eq!(o.status.code(), Some(2));

    let mut v = data.clone();
    v[4] = 7;
    let bad = dir.path().join("bad");
    fs::write(&bad, &v).unwrap();
    let o = pyrcodec(&["reconstruct", s(&bad), s(&dir.path().join("x.ppm"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version 7"));

    let o = pyrcodec(&["decompose", s(&dir.path().join("missing.ppm")), s(&cont)]);
    assert_eq!(o.status.code(), Some(2));
    let o = pyrcodec(&["encode", "--mode", "bogus", s(&input), s(&cont)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn encode_decode_round_trip_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let img = test_image(64, 64, 3, 8);
    let input = save(dir.path(), "a.ppm", &img);
    let stream = dir.path().join("a.ppyc");
    let back = dir.path().join("b.ppm");
    for extra in [
        vec![],
        vec!["--mode", "static", "--mixtures", "3"],
        vec!["--no-shift"],
        vec!["--no-modulo", "--n-squeeze", "0"],
        vec!["--n-squeeze", "2,1,0,0,0,0,0,0", "--verify"],
    ] {
        let mut args = vec!["encode", s(&input), s(&stream)];
        args.extend(&extra);
        let o = pyrcodec(&args);
        assert!(
            o.status.success(),
            "{extra:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let out = stdout(&o);
        assert!(out.contains("coarsest") && out.contains("F1") && out.contains("bits/dim"));
        let o = pyrcodec(&["decode", s(&stream), s(&back)]);
        assert!(o.status.success());
        assert_eq!(read_ppm(&back).unwrap(), img, "{extra:?}");
    }
}

#[test]
fn corrupted_stream_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "a.ppm", &test_image(32, 32, 3, 8));
    let stream = dir.path().join("a.ppyc");
    assert!(pyrcodec(&["encode", s(&input), s(&stream)])
        .status
        .success());
    let data = fs::read(&stream).unwrap();
    let cut = dir.path().join("cut");
    fs::write(&cut, &data[..data.len() - 3]).unwrap();
    let o = pyrcodec(&["decode", s(&cut), s(&dir.path().join("x.ppm"))]);
    assert_eq!(o.status.code(), Some(3));
    let mut magic = data.clone();
    magic[1] = b'Q';
    fs::write(&cut, &magic).unwrap();
    let o = pyrcodec(&["decode", s(&cut), s(&dir.path().join("x.ppm"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn encoding_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = save(dir.path(), "a.ppm", &test_image(64, 64, 3, 8));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(pyrcodec(&["encode", "--mode", "static", s(&input), s(&a)])
        .status
        .success());
    let o = Command::new(env!("CARGO_BIN_EXE_pyrcodec"))
        .env("PYRCODEC_THREADS", "1")
        .args(["encode", "--mode", "static", s(&input), s(&b)])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let o = Command::new(env!("CARGO_BIN_EXE_pyrcodec"))
        .env("PYRCODEC_THREADS", "zero")
        .args(["encode", s(&input), s(&b)])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_writes_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("imgs");
    fs::create_dir(&imgs).unwrap();
    for k in 0..3 {
        let mut img = test_image(32, 32, 3, 8);
        img.set(k, k, 0, 255).unwrap();
        save(&imgs, &format!("{k}.ppm"), &img);
    }
    let out = dir.path().join("out");
    let o = pyrcodec(&[
        "stats",
        s(&imgs),
        "--out",
        s(&out),
        "--max-distance",
        "8",
        "--per-axis",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let entropy = fs::read_to_string(out.join("entropy.csv")).unwrap();
    let mut lines = entropy.lines();
    assert!(lines.next().unwrap().starts_with("# pooled_channels=3"));
    assert_eq!(lines.next(), Some("level,entropy_bits"));
    assert!(lines.next().unwrap().starts_with("original,"));
    let mi = fs::read_to_string(out.join("mi_F1.csv")).unwrap();
    assert!(mi.contains("distance,mi_bits,axis"));
    assert_eq!(mi.lines().filter(|l| l.ends_with(",mean")).count(), 8);

    // identical invocations give identical files
    let again = dir.path().join("again");
    pyrcodec(&[
        "stats",
        s(&imgs),
        "--out",
        s(&again),
        "--max-distance",
        "8",
        "--per-axis",
    ]);
    for f in ["entropy.csv", "mi_original.csv", "mi_F1.csv"] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap()
        );
    }

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = pyrcodec(&["stats", s(&empty), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn critical_path_table() {
    let o = pyrcodec(&[
        "critical-path",
        "--n0",
        "1024",
        "--coarsest",
        "1",
        "--n-squeeze",
        "2",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("L = 20"), "{out}");
    assert!(out.trim_end().ends_with("T = 305"), "{out}");
    let o = pyrcodec(&["critical-path", "--n0", "1000"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn despeckle_removes_salt_and_pepper() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = Image::new(64, 64, 3, 8, [120u16, 80, 200].repeat(64 * 64)).unwrap();
    let clean = img.clone();
    for &(r, c) in &[(3usize, 5usize), (40, 12), (60, 60)] {
        for ch in 0..3 {
            img.set(r, c, ch, 255).unwrap();
        }
    }
    let input = save(dir.path(), "n.ppm", &img);
    let output = dir.path().join("o.ppm");
    let o = pyrcodec(&[
        "despeckle",
        s(&input),
        s(&output),
        "--contamination",
        "0.001",
        "--seed",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("trees=100") && out.contains("seed=4"), "{out}");
    assert_eq!(read_ppm(&output).unwrap(), clean);
    let o = pyrcodec(&["despeckle", s(&input), s(&output), "--window", "4"]);
    assert_eq!(o.status.code(), Some(2));
}
