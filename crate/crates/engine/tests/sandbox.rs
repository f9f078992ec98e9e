mod common;

use common::nb;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use autograde::sandbox::{Sandbox, SandboxConfig};
use autograde_core::{ExecutionStatus, TestSuite};

fn sandbox(root: &Path) -> Sandbox {
    Sandbox::new(SandboxConfig {
        scratch_root: root.join("scratch"),
        timeout_seconds: 10.0,
        ..SandboxConfig::default()
    })
}

fn suite(yaml: &str) -> TestSuite {
    serde_yaml::from_str(yaml).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    if let Ok(rd) = fs::read_dir(dir) {
        for e in rd.flatten() {
            let p = e.path();
            out.push(p.display().to_string());
            if p.is_dir() {
                out.extend(listing(&p));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn syntax_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let sb = sandbox(tmp.path());
    assert!(sb.check_syntax("x = 1").unwrap().ok);
    assert!(sb.check_syntax("").unwrap().ok);
    let bad = sb.check_syntax("def f(:").unwrap();
    assert!(!bad.ok);
    assert_eq!(bad.line, Some(1));
    assert!(bad.message.contains("SyntaxError"), "{}", bad.message);
}

#[test]
fn exact_match_and_weighted_fraction() {
    let tmp = tempfile::tempdir().unwrap();
    let sb = sandbox(tmp.path());
    let sub = nb::code("s", "def area(r):\n    return 2.0 * r\n");
    let one = suite("tests:\n  - {id: a, call: 'area(1.0)', expected: {kind: scalar, value: 2.0, abs_tol: 1.0e-9}}\n");
    let r = sb.run_tests(&sub, &one, &[]).unwrap();
    assert_eq!(r.execution_status, ExecutionStatus::Completed);
    assert_eq!(r.pass_fraction, 1.0);

    let four = suite(
        "tests:
  - {id: t1, call: 'area(1)', expected: {kind: scalar, value: 2}}
  - {id: t2, call: 'area(2)', expected: {kind: scalar, value: 4}}
  - {id: t3, call: '[area(1), area(3)]', expected: {kind: array, value: [2, 6]}}
  - {id: t4, call: 'area(2)', expected: {kind: scalar, value: 5}}
",
    );
    let r = sb.run_tests(&sub, &four, &[]).unwrap();
    // Weighted-sum oracle: three of four 1/4 weights.
    assert_eq!(r.pass_fraction, 0.25 + 0.25 + 0.25);
    assert!(!r.outcome("t4").unwrap().passed);
    assert_eq!(r.outcome("t4").unwrap().observed, "4");
}

#[test]
fn text_predicate_raised_and_nonnumeric() {
    let tmp = tempfile::tempdir().unwrap();
    let sb = sandbox(tmp.path());
    let sub = nb::code(
        "s",
        "import math\ndef greet(n):\n    return 'hi ' + n\ndef div(a, b):\n    return a / b\ndef bad():\n    return float('nan')\n",
    );
    let s = suite(
        "tests:
  - {id: text, call: 'greet(\"bo\")', expected: {kind: text, value: 'hi bo'}}
  - {id: pred, call: 'div(1, 4)', expected: {kind: predicate, value: 'result < 0.3'}}
  - {id: raised, call: 'div(1, 0)', expected: {kind: scalar, value: 0}}
  - {id: nan, call: 'bad()', expected: {kind: scalar, value: 1}}
  - {id: str_for_num, call: 'greet(\"x\")', expected: {kind: scalar, value: 1}}
",
    );
    let r = sb.run_tests(&sub, &s, &[]).unwrap();
    assert_eq!(r.execution_status, ExecutionStatus::Completed);
    assert!(r.outcome("text").unwrap().passed);
    assert!(r.outcome("pred").unwrap().passed);
    let raised = r.outcome("raised").unwrap();
    assert!(!raised.passed && raised.observed.contains("ZeroDivisionError"), "{}", raised.observed);
    assert!(!r.outcome("nan").unwrap().passed);
    assert!(r.outcome("str_for_num").unwrap().observed.contains("not numeric"));
}

#[test]
fn infinite_loop_times_out_within_a_second_of_the_limit() {
    let tmp = tempfile::tempdir().unwrap();
    let sb = sandbox(tmp.path());
    let sub = nb::code("loop", "while True:\n    pass\n");
    let s = suite("tests:\n  - {id: t, call: '1', expected: {kind: scalar, value: 1}}\ntimeout_seconds: 2\n");
    let start = Instant::now();
    let r = sb.run_tests(&sub, &s, &[]).unwrap();
    let took = start.elapsed();
    assert_eq!(r.execution_status, ExecutionStatus::Timeout);
    assert_eq!(r.pass_fraction, 0.0);
    assert!(took < Duration::from_secs(3), "{took:?}");
}

#[test]
fn crashes_are_reported_not_raised() {
    let tmp = tempfile::tempdir().unwrap();
    let sb = sandbox(tmp.path());
    let s = suite("tests:\n  - {id: t, call: '1', expected: {kind: scalar, value: 1}}\n");
    let r = sb.run_tests(&nb::code("c", "raise RuntimeError('boom')\n"), &s, &[]).unwrap();
    assert_eq!(r.execution_status, ExecutionStatus::Crashed);
    assert!(r.detail.contains("RuntimeError: boom"), "{}", r.detail);
    let r = sb.run_tests(&nb::code("c", "import os\nos._exit(3)\n"), &s, &[]).unwrap();
    assert_eq!(r.execution_status, ExecutionStatus::Crashed);
    let r = sb.run_tests(&nb::code("c", "import sys\nsys.exit(0)\n"), &s, &[]).unwrap();
    assert_eq!(r.execution_status, ExecutionStatus::Crashed);
}

#[test]
fn memory_cap_applies() {
    let tmp = tempfile::tempdir().unwrap();
    let sb = sandbox(tmp.path());
    let s = suite(
        "tests:\n  - {id: t, call: 'len(bytearray(2 * 1024 ** 3))', expected: {kind: scalar, value: 0}}\nmemory_limit_mb: 256\n",
    );
    let r = sb.run_tests(&nb::code("m", "x = 1\n"), &s, &[]).unwrap();
    let t = r.outcome("t").unwrap();
    assert!(!t.passed);
    assert!(t.observed.contains("MemoryError"), "{}", t.observed);
}

#[test]
fn writes_outside_scratch_leave_no_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let watched = tmp.path().join("watched");
    fs::create_dir(&watched).unwrap();
    fs::write(watched.join("keep.txt"), "original").unwrap();
    let before = listing(tmp.path());
    let w = watched.display().to_string();
    let program = format!(
        r#"import os, shutil, subprocess, socket, pathlib
attempts = {{}}
def attempt(name, fn):
    try:
        fn()
        attempts[name] = 'done'
    except Exception as e:
        attempts[name] = type(e).__name__
attempt('abs', lambda: open('{w}/new.txt', 'w').write('x'))
attempt('append', lambda: open('{w}/keep.txt', 'a').write('x'))
attempt('rel', lambda: open('../escape.txt', 'w').write('x'))
attempt('tmp', lambda: open('/tmp/autograde-escape.txt', 'w').write('x'))
attempt('pathlib', lambda: pathlib.Path('{w}/p.txt').write_text('x'))
attempt('osopen', lambda: os.open('{w}/o.txt', os.O_CREAT | os.O_WRONLY))
attempt('mkdir', lambda: os.mkdir('{w}/d'))
attempt('remove', lambda: os.remove('{w}/keep.txt'))
attempt('rename', lambda: os.rename('{w}/keep.txt', 'stolen.txt'))
attempt('rmtree', lambda: shutil.rmtree('{w}'))
attempt('subprocess', lambda: subprocess.run(['touch', '{w}/sub.txt']))
attempt('system', lambda: os.system('touch {w}/sys.txt'))
attempt('socket', lambda: socket.create_connection(('127.0.0.1', 9)))
attempt('inside', lambda: open('scratch_ok.txt', 'w').write('fine'))
inside_ok = open('scratch_ok.txt').read() == 'fine'
"#
    );
    let sb = sandbox(tmp.path());
    let s = suite(
        "tests:
  - {id: inside, call: 'inside_ok', expected: {kind: predicate, value: 'result is True'}}
  - {id: blocked, call: 'sorted(k for k, v in attempts.items() if v == \"done\")', expected: {kind: text, value: \"['inside']\"}}
",
    );
    let r = sb.run_tests(&nb::code("fs", &program), &s, &[]).unwrap();
    assert_eq!(r.execution_status, ExecutionStatus::Completed, "{}", r.detail);
    assert!(r.outcome("inside").unwrap().passed);
    assert!(r.outcome("blocked").unwrap().passed, "{}", r.outcome("blocked").unwrap().observed);
    // Scratch directories are removed after the run.
    let after = listing(tmp.path());
    assert_eq!(before.iter().filter(|p| !p.contains("/scratch")).collect::<Vec<_>>(), after.iter().filter(|p| !p.contains("/scratch")).collect::<Vec<_>>());
    assert_eq!(fs::read_to_string(watched.join("keep.txt")).unwrap(), "original");
    assert!(listing(&tmp.path().join("scratch")).is_empty());
    assert!(!Path::new("/tmp/autograde-escape.txt").exists());
}

#[test]
fn attachments_are_readable_in_scratch() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data_file.csv");
    fs::write(&data, "t,y\n0,1\n1,3\n").unwrap();
    let sb = sandbox(tmp.path());
    let sub = nb::code("a", "rows = open('data_file.csv').read().splitlines()[1:]\n");
    let s = suite("tests:\n  - {id: n, call: 'len(rows)', expected: {kind: scalar, value: 2}}\n");
    let r = sb.run_tests(&sub, &s, &[data]).unwrap();
    assert_eq!(r.pass_fraction, 1.0, "{:?}", r);
}

#[test]
fn repeated_runs_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let sb = sandbox(tmp.path());
    let sub = nb::code("d", "import random\nvals = sorted({'b', 'a', 'c'})\ndef f(x):\n    return [x, x * 0.1]\n");
    let s = suite(
        "tests:
  - {id: a, call: 'f(3)', expected: {kind: array, value: [3, 0.3]}}
  - {id: b, call: 'vals', expected: {kind: text, value: \"['a', 'b', 'c']\"}}
  - {id: c, call: 'f(1)[0] / 0', expected: {kind: scalar, value: 0}}
",
    );
    let mut a = sb.run_tests(&sub, &s, &[]).unwrap();
    let mut b = sb.run_tests(&sub, &s, &[]).unwrap();
    for r in [&mut a, &mut b] {
        for t in &mut r.per_test {
            t.stderr_excerpt.clear();
        }
    }
    assert_eq!(a, b);
}

#[test]
fn signature_notes_and_missing_interpreter() {
    let tmp = tempfile::tempdir().unwrap();
    let sb = sandbox(tmp.path());
    let s = suite(
        "tests:\n  - {id: t, call: 'g(1, 2)', expected: {kind: scalar, value: 3}}\nrequired_functions: [{name: g, arity: 3}, {name: h, arity: 1}]\n",
    );
    let r = sb.run_tests(&nb::code("g", "def g(a, b):\n    return a + b\n"), &s, &[]).unwrap();
    assert!(r.detail.contains("function g does not take 3 parameter(s)"), "{}", r.detail);
    assert!(r.detail.contains("function h is not defined"));

    let broken = Sandbox::new(SandboxConfig {
        interpreter_command: vec!["/nonexistent/python".into()],
        scratch_root: tmp.path().join("scratch2"),
        ..SandboxConfig::default()
    });
    assert!(broken.verify().is_err());
}
