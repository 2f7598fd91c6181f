use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_microrelay"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const ADD: &str = "def @main(%x: Tensor[(2,), int32]) {\n  add(%x, add(1, 2))\n}\n";

#[test]
fn check_prints_signatures() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.rly", ADD);
    let o = run(&["check", p(&f)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "@main: fn (Tensor[(2,), int32]) -> Tensor[(2,), int32]");
}

#[test]
fn opt_folds_constants() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.rly", ADD);
    let o = run(&["opt", p(&f), "--passes", "fold"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("const 3"), "{}", stdout(&o));
}

#[test]
fn opt_pe_then_fuse_makes_primitives() {
    let dir = TempDir::new().unwrap();
    let src = "def @sum_to(%n: int32) -> int32 {
  if (equal(%n, 0)) { 0 } else { add(%n, @sum_to(subtract(%n, 1))) }
}
def @main(%x: Tensor[(2,), int32]) {
  add(@sum_to(10), %x)
}";
    let f = write(&dir, "a.rly", src);
    let o = run(&["opt", p(&f), "--passes", "pe,fuse"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("Primitive") && out.contains("const 55"), "{out}");
}

#[test]
fn opt_output_reparses() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.rly", ADD);
    let o = run(&["opt", p(&f), "--passes", "fuse,fold,layout=NHWC,cse"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g = write(&dir, "b.rly", &stdout(&o));
    assert!(run(&["check", p(&g)]).status.success());
}

#[test]
fn quantize_with_random_calibration() {
    let dir = TempDir::new().unwrap();
    let src = "def @main(%x: Tensor[(1, 2), float32]) {\n  dense(%x, const([[0.5, -0.25]], (1, 2), float32))\n}";
    let f = write(&dir, "a.rly", src);
    let o = run(&["opt", p(&f), "--passes", "quantize", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("int8"), "{}", stdout(&o));
}

#[test]
fn unknown_pass_lists_valid_ones() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.rly", ADD);
    let o = run(&["opt", p(&f), "--passes", "fold,bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus") && stderr(&o).contains("combine-conv"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = run(&["check", "/nonexistent/file.rly"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn parse_error_has_location() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "bad.rly", "def @main() {\n  add(1, \n}");
    let o = run(&["check", p(&f)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.rly:3"), "{}", stderr(&o));
}

#[test]
fn run_with_inputs() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.rly", "def @main(%x: Tensor[(2,), int32]) { %x }");
    let i = write(&dir, "in.txt", "%x = const([1, 2], (2,), int32)\n");
    let o = run(&["run", p(&f), "--inputs", p(&i)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "[1, 2]");
}

#[test]
fn run_rejects_wrong_input_shape() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.rly", "def @main(%x: Tensor[(2,), int32]) { %x }");
    let i = write(&dir, "in.txt", "%x = const([1, 2, 3], (3,), int32)\n");
    let o = run(&["run", p(&f), "--inputs", p(&i)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("TypeMismatch"), "{}", stderr(&o));
}

#[test]
fn run_uses_the_prelude() {
    let dir = TempDir::new().unwrap();
    let src = "def @main() -> int32 {
  @foldl(fn (%a: int32, %b: int32) { add(%a, %b) }, 0, Cons(1, Cons(2, Cons(3, Nil()))))
}";
    let f = write(&dir, "a.rly", src);
    let o = run(&["run", p(&f)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "6");
}

#[test]
fn run_out_of_fuel() {
    let dir = TempDir::new().unwrap();
    let src = "def @loop(%n: int32) -> int32 { @loop(add(%n, 1)) }\ndef @main() -> int32 { @loop(0) }";
    let f = write(&dir, "a.rly", src);
    let o = bin().args(["run", p(&f)]).env("MICRORELAY_FUEL", "1000").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).to_lowercase().contains("fuel"), "{}", stderr(&o));
}

#[test]
fn fmt_is_a_fixed_point() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "a.rly", "def @main(%x:Tensor[(2,),int32]){let %y=add(%x,%x);%y}");
    let once = stdout(&run(&["fmt", p(&f)]));
    let g = write(&dir, "b.rly", &once);
    let twice = stdout(&run(&["fmt", p(&g)]));
    assert_eq!(once, twice);
}

#[test]
fn prelude_subcommand_prints_source() {
    let o = run(&["prelude"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("def @map") && out.contains("type List"), "{out}");
}
