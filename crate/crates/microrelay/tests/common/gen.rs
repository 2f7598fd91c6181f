//! Random well-typed programs in the text format, with the expected output
//! shape computed alongside from first principles.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Shape = Vec<usize>;

/// Numpy-style broadcast of two shapes.
pub fn broadcast(a: &[usize], b: &[usize]) -> Option<Shape> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let x = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let y = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (x, y) {
            _ if x == y => x,
            (1, _) => y,
            (_, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Output extent of a convolution along one spatial axis.
pub fn conv_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

fn shape_text(s: &[usize]) -> String {
    let dims: Vec<String> = s.iter().map(|d| d.to_string()).collect();
    if s.len() == 1 {
        format!("({},)", dims[0])
    } else {
        format!("({})", dims.join(", "))
    }
}

pub fn tensor_type(s: &[usize]) -> String {
    if s.is_empty() {
        String::from("float32")
    } else {
        format!("Tensor[{}, float32]", shape_text(s))
    }
}

pub struct Program {
    pub source: String,
    /// Shapes of the fields of `main`'s result, or one shape for a tensor.
    pub result: Vec<Shape>,
    pub tuple_result: bool,
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    values: Vec<(String, Shape)>,
    lines: Vec<String>,
    next: usize,
    /// Whether to use control flow, closures, tuples and references.
    rich: bool,
}

impl Gen<'_> {
    fn fresh(&mut self) -> String {
        self.next += 1;
        format!("%v{}", self.next)
    }

    fn constant(&mut self, s: &[usize]) -> String {
        let n: usize = s.iter().product();
        let data: Vec<f64> = (0..n).map(|_| (self.rng.gen_range(-8i32..8) as f64) * 0.125).collect();
        fn nest(data: &[f64], s: &[usize]) -> String {
            if s.is_empty() {
                return format!("{:?}", data[0] as f32);
            }
            let inner: usize = s[1..].iter().product();
            let parts: Vec<String> = (0..s[0]).map(|i| nest(&data[i * inner..(i + 1) * inner], &s[1..])).collect();
            format!("[{}]", parts.join(", "))
        }
        format!("const({}, {}, float32)", nest(&data, s), shape_text(s))
    }

    fn bind(&mut self, expr: String, shape: Shape) {
        let v = self.fresh();
        self.lines.push(format!("let {v} = {expr};"));
        self.values.push((v, shape));
    }

    fn pick(&mut self) -> (String, Shape) {
        let i = if self.rng.gen_bool(0.6) { self.values.len() - 1 } else { self.rng.gen_range(0..self.values.len()) };
        self.values[i].clone()
    }

    fn step(&mut self) {
        let (a, s) = self.pick();
        let rank = s.len();
        match self.rng.gen_range(0..14) {
            0 | 1 => {
                let op = ["relu", "tanh", "sigmoid", "negative", "abs"].choose(self.rng).unwrap();
                self.bind(format!("{op}({a})"), s);
            }
            2 | 3 => {
                let op = ["add", "subtract", "multiply", "max", "min"].choose(self.rng).unwrap();
                let other = self.values.iter().filter(|(_, t)| broadcast(&s, t).is_some()).cloned().collect::<Vec<_>>();
                let (b, t) = if self.rng.gen_bool(0.5) {
                    other.choose(self.rng).unwrap().clone()
                } else {
                    let keep = self.rng.gen_range(0..=rank);
                    let t: Shape = s[rank - keep..].iter().map(|&d| if self.rng.gen_bool(0.3) { 1 } else { d }).collect();
                    (self.constant(&t), t)
                };
                let out = broadcast(&s, &t).unwrap();
                if self.rng.gen_bool(0.5) {
                    self.bind(format!("{op}({a}, {b})"), out);
                } else {
                    self.bind(format!("{op}({b}, {a})"), out);
                }
            }
            4 if rank >= 1 => {
                let units = self.rng.gen_range(1..=4);
                let w = self.constant(&[units, s[rank - 1]]);
                let mut out = s[..rank - 1].to_vec();
                out.push(units);
                self.bind(format!("dense({a}, {w})"), out);
            }
            5 if rank == 4 => {
                let (c, h, w) = (s[1], s[2], s[3]);
                let pad = self.rng.gen_range(0..=1);
                let stride = self.rng.gen_range(1..=2);
                let kh = self.rng.gen_range(1..=(h + 2 * pad).min(3));
                let kw = self.rng.gen_range(1..=(w + 2 * pad).min(3));
                let o = self.rng.gen_range(1..=3);
                let weight = self.constant(&[o, c, kh, kw]);
                let out = vec![s[0], o, conv_extent(h, kh, stride, pad), conv_extent(w, kw, stride, pad)];
                self.bind(format!("conv2d({a}, {weight}, strides=({stride}, {stride}), padding=({pad}, {pad}))"), out);
            }
            6 if rank >= 1 => {
                let op = ["sum", "max_reduce", "min_reduce"].choose(self.rng).unwrap();
                let axis = self.rng.gen_range(0..rank);
                let keep = self.rng.gen_bool(0.5);
                let mut out = s.clone();
                if keep {
                    out[axis] = 1;
                } else {
                    out.remove(axis);
                }
                let keep = if keep { "True" } else { "False" };
                self.bind(format!("{op}({a}, axis={axis}, keepdims={keep})"), out);
            }
            7 if rank >= 2 => {
                let mut perm: Vec<usize> = (0..rank).collect();
                perm.shuffle(self.rng);
                let out = perm.iter().map(|&p| s[p]).collect();
                let axes: Vec<String> = perm.iter().map(|p| p.to_string()).collect();
                self.bind(format!("transpose({a}, axes=({}))", axes.join(", ")), out);
            }
            8 if rank >= 1 => {
                let n: usize = s.iter().product();
                let out = if self.rng.gen_bool(0.5) { vec![n] } else { vec![1, n] };
                let dims: Vec<String> = out.iter().map(|d| d.to_string()).collect();
                self.bind(format!("reshape({a}, newshape=({}))", dims.join(", ")), out);
            }
            9 if rank < 4 => {
                let axis = self.rng.gen_range(0..=rank);
                let mut out = s.clone();
                out.insert(axis, 1);
                self.bind(format!("expand_dims({a}, axis={axis}, num_newaxis=1)"), out);
            }
            10 if rank >= 2 => {
                let bias = self.constant(&[s[1]]);
                self.bind(format!("bias_add({a}, {bias}, axis=1)"), s);
            }
            11 if rank >= 1 => {
                let axis = self.rng.gen_range(0..rank);
                let mut out = s.clone();
                out[axis] *= 2;
                self.bind(format!("concat(({a}, {a}), axis={axis})"), out);
            }
            12 if rank >= 1 && s.iter().any(|d| d % 2 == 0) => {
                let axes: Vec<usize> = (0..rank).filter(|&i| s[i] % 2 == 0).collect();
                let axis = *axes.choose(self.rng).unwrap();
                let mut out = s.clone();
                out[axis] /= 2;
                let part = self.rng.gen_range(0..2);
                self.bind(format!("split({a}, indices_or_sections=2, axis={axis}).{part}"), out);
            }
            13 if self.rich => self.rich_step(a, s),
            _ => self.bind(format!("relu({a})"), s),
        }
    }

    /// Steps that exercise the non-dataflow parts of the language.
    fn rich_step(&mut self, a: String, s: Shape) {
        let ty = tensor_type(&s);
        match self.rng.gen_range(0..5) {
            0 => {
                let (b, t) = self.pick();
                let tv = self.fresh();
                self.lines.push(format!("let {tv} = ({a}, {b});"));
                let (part, shape) = if self.rng.gen_bool(0.5) { (0, s) } else { (1, t) };
                self.bind(format!("{tv}.{part}"), shape);
            }
            1 => {
                let f = self.fresh();
                self.lines.push(format!("let {f} = fn (%p: {ty}) -> {ty} {{ let %q = tanh(%p); multiply(%q, %p) }};"));
                self.bind(format!("{f}({a})"), s);
            }
            2 => {
                let cond = if self.rng.gen_bool(0.5) { "True" } else { "False" };
                self.bind(format!("if ({cond}) {{ relu({a}) }} else {{ let %n = negative({a}); %n }}"), s);
            }
            3 => {
                let r = self.fresh();
                self.lines.push(format!("let {r} = ref({a});"));
                self.lines.push(format!("{r} := sigmoid(!{r});"));
                self.bind(format!("!{r}"), s);
            }
            _ => {
                let g = self.fresh();
                self.lines.push(format!("{g} = exp({a});"));
                self.values.push((g, s));
            }
        }
    }
}

/// A random program of `steps` operator applications over 1-3 float32
/// parameters. `rich` adds tuples, closures, conditionals and references.
pub fn random_program(rng: &mut ChaCha8Rng, steps: usize, rich: bool) -> Program {
    let n_params = rng.gen_range(1..=3);
    let mut params = Vec::new();
    let mut values = Vec::new();
    for i in 0..n_params {
        let rank = if i == 0 && rng.gen_bool(0.4) { 4 } else { rng.gen_range(0..=3) };
        let shape: Shape = (0..rank).map(|_| rng.gen_range(1..=4)).collect();
        let name = format!("%p{i}");
        params.push(format!("{name}: {}", tensor_type(&shape)));
        values.push((name, shape));
    }
    let mut g = Gen { rng, values, lines: Vec::new(), next: 0, rich };
    for _ in 0..steps {
        g.step();
    }
    let (last, shape) = g.values.last().unwrap().clone();
    let (tail, result, tuple_result) = if g.rng.gen_bool(0.2) && g.values.len() > 1 {
        let (other, t) = g.values[g.rng.gen_range(0..g.values.len() - 1)].clone();
        (format!("({last}, {other})"), vec![shape, t], true)
    } else {
        (last, vec![shape], false)
    };
    let body: Vec<String> = g.lines.iter().map(|l| format!("  {l}")).collect();
    let source = format!("def @main({}) {{\n{}\n  {tail}\n}}\n", params.join(", "), body.join("\n"));
    Program { source, result, tuple_result }
}
