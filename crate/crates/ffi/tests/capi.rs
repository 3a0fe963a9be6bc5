use std::ffi::{CStr, CString};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::ptr;

use dmseg_ffi::*;

const N_CPGS: usize = 60;
const N_PER_GROUP: usize = 8;

// deterministic noise in [-0.5, 0.5)
fn noise(i: usize, j: usize) -> f64 {
    let mut x = (i as u64) << 32 | j as u64;
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

struct Files {
    _dir: tempfile::TempDir,
    matrix: CString,
    phenotypes: CString,
    manifest: CString,
    out: PathBuf,
}

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

// ten clusters of six CpGs; rows 12..18 shifted up in the case group
fn write_inputs() -> Files {
    let dir = tempfile::tempdir().unwrap();
    let n = 2 * N_PER_GROUP;
    let mut m = String::from("probe_id");
    for j in 0..n {
        write!(m, "\ts{j:02}").unwrap();
    }
    m.push('\n');
    let mut man = String::from("probe_id\tchromosome\tposition\n");
    for i in 0..N_CPGS {
        write!(m, "cg{i:04}").unwrap();
        for j in 0..n {
            let shift = if (12..18).contains(&i) && j >= N_PER_GROUP { 0.3 } else { 0.0 };
            let v = 0.5 + 0.1 * noise(i, j) + shift;
            write!(m, "\t{:.4}", v.clamp(0.01, 0.99)).unwrap();
        }
        m.push('\n');
        writeln!(man, "cg{i:04}\tchr1\t{}", 1000 + (i / 6) * 5000 + (i % 6) * 100).unwrap();
    }
    let mut ph = String::from("sample_id\tgroup\n");
    for j in 0..n {
        writeln!(ph, "s{j:02}\t{}", if j < N_PER_GROUP { "control" } else { "case" }).unwrap();
    }
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let (matrix, phenotypes, manifest) = (
        write("matrix.tsv", &m),
        write("phenotypes.tsv", &ph),
        write("manifest.tsv", &man),
    );
    Files {
        matrix: c(&matrix),
        phenotypes: c(&phenotypes),
        manifest: c(&manifest),
        out: dir.path().join("results.tsv"),
        _dir: dir,
    }
}

fn last_error() -> String {
    let p = dmseg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn load(f: &Files) -> *mut DmsegDataset {
    let group = CString::new("group").unwrap();
    let case = CString::new("case").unwrap();
    let mut ds = ptr::null_mut();
    let st = unsafe {
        dmseg_dataset_load(
            f.matrix.as_ptr(),
            f.phenotypes.as_ptr(),
            f.manifest.as_ptr(),
            group.as_ptr(),
            case.as_ptr(),
            DMSEG_SCALE_BETA,
            &mut ds,
        )
    };
    assert_eq!(st, DmsegStatus::Ok);
    assert!(dmseg_last_error().is_null());
    ds
}

fn params(permutations: u32, threads: u32) -> DmsegParams {
    let mut p = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { dmseg_params_default(p.as_mut_ptr()) }, DmsegStatus::Ok);
    let mut p = unsafe { p.assume_init() };
    p.permutations = permutations;
    p.threads = threads;
    p
}

fn run(ds: *const DmsegDataset, p: &DmsegParams) -> *mut DmsegResults {
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { dmseg_run(ds, p, &mut res) }, DmsegStatus::Ok, "{}", {
        let e = dmseg_last_error();
        if e.is_null() { String::new() } else { last_error() }
    });
    res
}

fn regions(res: *const DmsegResults) -> Vec<DmsegRegion> {
    (0..unsafe { dmseg_results_len(res) })
        .map(|i| {
            let mut r = std::mem::MaybeUninit::uninit();
            assert_eq!(unsafe { dmseg_results_get(res, i, r.as_mut_ptr()) }, DmsegStatus::Ok);
            unsafe { r.assume_init() }
        })
        .collect()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(dmseg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn defaults_are_sensible() {
    let p = params(500, 0);
    assert_eq!(p.max_gap_bp, 500);
    assert_eq!(p.min_cpgs, 2);
    assert_eq!(p.seed, 1);
    assert_eq!(p.mode, DMSEG_MODE_DMR);
    assert!((p.z_main - 1.96).abs() < 1e-12 && (p.z_bridge - 1.64).abs() < 1e-12);
}

#[test]
fn planted_region_round_trips_through_handles() {
    let f = write_inputs();
    let ds = load(&f);
    unsafe {
        assert_eq!(dmseg_dataset_n_cpgs(ds), N_CPGS);
        assert_eq!(dmseg_dataset_n_samples(ds), 2 * N_PER_GROUP);
    }
    let res = run(ds, &params(50, 1));
    let rs = regions(res);
    assert!(!rs.is_empty());
    let top = rs[0];
    assert!(top.segment_mean > 0.15, "{top:?}");
    assert!(top.n_cpgs >= 4 && top.cluster_size == 6);
    assert_eq!(top.fwer, 0.0);
    let name = |p: *const std::ffi::c_char| unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe {
        assert_eq!(name(dmseg_results_chromosome(res, 0)), "chr1");
        let start: usize = name(dmseg_results_start_probe(res, 0))[2..].parse().unwrap();
        let end: usize = name(dmseg_results_end_probe(res, 0))[2..].parse().unwrap();
        assert!((12..18).contains(&start) && (12..18).contains(&end) && end - start + 1 == top.n_cpgs);
        assert!(dmseg_results_chromosome(res, rs.len()).is_null());

        let out = c(&f.out);
        assert_eq!(dmseg_results_write_tsv(res, out.as_ptr()), DmsegStatus::Ok);
        let text = std::fs::read_to_string(&f.out).unwrap();
        assert!(text.starts_with("# dmseg "));
        assert!(text.contains("# command=dmr"));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), rs.len() + 1);

        dmseg_results_free(res);
        dmseg_dataset_free(ds);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let f = write_inputs();
    let ds = load(&f);
    let (a, b) = (run(ds, &params(40, 1)), run(ds, &params(40, 3)));
    assert_eq!(regions(a), regions(b));
    let mut vmr = params(20, 1);
    vmr.mode = DMSEG_MODE_VMR;
    let v = run(ds, &vmr);
    assert!(regions(v).iter().all(|r| r.p_value > 0.0 && r.p_value <= 1.0));
    unsafe {
        dmseg_results_free(a);
        dmseg_results_free(b);
        dmseg_results_free(v);
        dmseg_dataset_free(ds);
    }
}

#[test]
fn errors_set_status_and_message() {
    let f = write_inputs();
    let missing = CString::new("/nonexistent/matrix.tsv").unwrap();
    let group = CString::new("group").unwrap();
    let mut ds = ptr::null_mut();
    let st = unsafe {
        dmseg_dataset_load(
            missing.as_ptr(),
            f.phenotypes.as_ptr(),
            f.manifest.as_ptr(),
            group.as_ptr(),
            ptr::null(),
            DMSEG_SCALE_BETA,
            &mut ds,
        )
    };
    assert_eq!(st, DmsegStatus::Io);
    assert!(ds.is_null());
    assert!(last_error().contains("/nonexistent/matrix.tsv"));

    let st = unsafe {
        dmseg_dataset_load(
            f.matrix.as_ptr(),
            f.phenotypes.as_ptr(),
            f.manifest.as_ptr(),
            group.as_ptr(),
            ptr::null(),
            7,
            &mut ds,
        )
    };
    assert_eq!(st, DmsegStatus::InvalidConfig);
    assert!(last_error().contains("scale"));

    let ds = load(&f);
    let mut p = params(0, 1);
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { dmseg_run(ds, &p, &mut res) }, DmsegStatus::InvalidConfig);
    assert!(res.is_null());
    p.permutations = 10;
    p.mode = 9;
    assert_eq!(unsafe { dmseg_run(ds, &p, &mut res) }, DmsegStatus::InvalidConfig);
    assert!(last_error().contains("mode"));

    let res = run(ds, &params(10, 1));
    let mut r = std::mem::MaybeUninit::uninit();
    let n = unsafe { dmseg_results_len(res) };
    assert_eq!(unsafe { dmseg_results_get(res, n, r.as_mut_ptr()) }, DmsegStatus::IndexOutOfRange);
    unsafe {
        dmseg_results_free(res);
        dmseg_dataset_free(ds);
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(dmseg_params_default(ptr::null_mut()), DmsegStatus::NullArgument);
        let mut ds = ptr::null_mut();
        let g = CString::new("group").unwrap();
        let st = dmseg_dataset_load(ptr::null(), g.as_ptr(), g.as_ptr(), g.as_ptr(), ptr::null(), 0, &mut ds);
        assert_eq!(st, DmsegStatus::NullArgument);
        assert!(last_error().contains("matrix_path"));
        let p = params(10, 1);
        let mut res = ptr::null_mut();
        assert_eq!(dmseg_run(ptr::null(), &p, &mut res), DmsegStatus::NullArgument);
        assert_eq!(dmseg_results_len(ptr::null()), 0);
        assert_eq!(dmseg_dataset_n_cpgs(ptr::null()), 0);
        assert!(dmseg_results_start_probe(ptr::null(), 0).is_null());
        assert_eq!(dmseg_results_write_tsv(ptr::null(), g.as_ptr()), DmsegStatus::NullArgument);
        let mut m = 0.0;
        assert_eq!(dmseg_lrt_score(ptr::null(), ptr::null(), 0, &mut m, &mut m), DmsegStatus::NullArgument);
        dmseg_dataset_free(ptr::null_mut());
        dmseg_results_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_is_reported() {
    let bad = CString::new(vec![0xff, 0xfe]).unwrap();
    let g = CString::new("group").unwrap();
    let mut ds = ptr::null_mut();
    let st = unsafe { dmseg_dataset_load(bad.as_ptr(), g.as_ptr(), g.as_ptr(), g.as_ptr(), ptr::null(), 0, &mut ds) };
    assert_eq!(st, DmsegStatus::InvalidUtf8);
}

#[test]
fn lrt_score_matches_weighted_mean() {
    let b = [0.3, -0.1, 0.25, 0.4];
    let v = [0.01, 0.02, 0.015, 0.03];
    let (mut mean, mut lrt) = (0.0, 0.0);
    let st = unsafe { dmseg_lrt_score(b.as_ptr(), v.as_ptr(), 4, &mut mean, &mut lrt) };
    assert_eq!(st, DmsegStatus::Ok);
    assert!((mean - 0.22).abs() < 1e-14 && (lrt - 12.1).abs() < 1e-12);
    let bad = [0.01, 0.0, 0.015, 0.03];
    let st = unsafe { dmseg_lrt_score(b.as_ptr(), bad.as_ptr(), 4, &mut mean, &mut lrt) };
    assert_eq!(st, DmsegStatus::Numeric);
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dmseg.h")
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "dmseg_version",
        "dmseg_last_error",
        "dmseg_params_default",
        "dmseg_dataset_load",
        "dmseg_dataset_free",
        "dmseg_run",
        "dmseg_results_get",
        "dmseg_results_write_tsv",
        "dmseg_results_free",
        "dmseg_lrt_score",
        "typedef struct DmsegDataset DmsegDataset;",
        "DMSEG_STATUS_NULL_ARGUMENT = 1",
        "#define DMSEG_MODE_VMR 1",
    ] {
        assert!(h.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"dmseg.h\"\n\
         int main(void) {\n\
           DmsegParams p; DmsegResults *r = NULL; DmsegDataset *d = NULL;\n\
           if (dmseg_params_default(&p) != DMSEG_STATUS_OK) return 1;\n\
           p.mode = DMSEG_MODE_VMR;\n\
           (void)dmseg_run(d, &p, &r);\n\
           dmseg_results_free(r);\n\
           return 0;\n\
         }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
