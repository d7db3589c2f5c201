use std::cell::{Ref, RefCell};
use std::fmt;

use ndarray::{s, Array2, Axis};

use crate::error::{Result, RhinoError};
use crate::math::sigmoid;
use crate::scalar::Scalar;

pub(crate) enum Op<T> {
    Leaf,
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, T),
    Offset(usize),
    Exp(usize),
    Ln(usize),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    Softplus(usize),
    Sqrt(usize),
    Square(usize),
    Softmax(usize),
    LogSoftmax(usize),
    LogSumExp(usize),
    LayerNorm(usize, T),
    Sum(usize),
    SumRows(usize),
    SumCols(usize),
    MatMul(usize, usize),
    Transpose(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    Reshape(usize),
    GatherRows(usize, Vec<usize>),
    Gather(usize, Vec<Option<usize>>),
    BatchedLeftMatMul(usize, usize, usize),
    TraceExpm(usize, Array2<T>),
    StraightThrough(usize),
}

pub(crate) struct Node<T> {
    pub(crate) value: Array2<T>,
    pub(crate) op: Op<T>,
    pub(crate) needs_grad: bool,
}

/// Append-only record of a computation.
pub struct Tape<T: Scalar> {
    pub(crate) nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Array2<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Array2<T>) -> Var<'_, T> {
        self.push(value, Op::Const, false)
    }

    pub fn scalar(&self, value: T) -> Var<'_, T> {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub(crate) fn push(&self, value: Array2<T>, op: Op<T>, needs_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn needs_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Reverse sweep from a `1 x 1` loss.
    pub fn gradient(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(RhinoError::invalid("loss belongs to a different tape"));
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.dim() != (1, 1) {
            return Err(RhinoError::invalid(format!(
                "gradient requires a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Array2<T>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(loss.id + 1, || None);
        grads[loss.id] = Some(Array2::from_elem((1, 1), T::one()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.needs_grad {
                backprop(&nodes, id, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Adjoints produced by [`Tape::gradient`].
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Array2<T>> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to `var`, zero when the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_, T>) -> Array2<T> {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Array2::zeros(var.tape.nodes.borrow()[var.id].value.raw_dim()),
        }
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Array2<T> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn value_ref(&self) -> Ref<'t, Array2<T>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.dim()
    }

    /// Value of a `1 x 1` variable.
    pub fn scalar_value(&self) -> T {
        let v = self.value_ref();
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }
}

/// Sums `g` down to `shape` when the operand was row-broadcast.
fn unbroadcast<T: Scalar>(g: Array2<T>, shape: (usize, usize)) -> Array2<T> {
    if g.dim() == shape {
        g
    } else {
        g.sum_axis(Axis(0)).insert_axis(Axis(0))
    }
}

fn accumulate<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Array2<T>>],
    id: usize,
    contribution: Array2<T>,
) {
    if !nodes[id].needs_grad {
        return;
    }
    match &mut grads[id] {
        Some(g) => *g += &contribution,
        slot @ None => *slot = Some(contribution),
    }
}

fn backprop<T: Scalar>(
    nodes: &[Node<T>],
    id: usize,
    g: &Array2<T>,
    grads: &mut [Option<Array2<T>>],
) {
    let out = &nodes[id].value;
    let val = |i: usize| &nodes[i].value;
    let two = T::lit(2.0);
    match &nodes[id].op {
        Op::Leaf | Op::Const => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, unbroadcast(g.clone(), val(*a).dim()));
            accumulate(nodes, grads, *b, unbroadcast(g.clone(), val(*b).dim()));
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, unbroadcast(g.clone(), val(*a).dim()));
            accumulate(nodes, grads, *b, unbroadcast(g.mapv(|x| -x), val(*b).dim()));
        }
        Op::Mul(a, b) => {
            if nodes[*a].needs_grad {
                accumulate(nodes, grads, *a, unbroadcast(g * val(*b), val(*a).dim()));
            }
            if nodes[*b].needs_grad {
                accumulate(nodes, grads, *b, unbroadcast(g * val(*a), val(*b).dim()));
            }
        }
        Op::Div(a, b) => {
            if nodes[*a].needs_grad {
                accumulate(nodes, grads, *a, unbroadcast(g / val(*b), val(*a).dim()));
            }
            if nodes[*b].needs_grad {
                // d(a/b)/db = -out / b
                let gb = (g * out / val(*b)).mapv(|x| -x);
                accumulate(nodes, grads, *b, unbroadcast(gb, val(*b).dim()));
            }
        }
        Op::Neg(a) => accumulate(nodes, grads, *a, g.mapv(|x| -x)),
        Op::Scale(a, c) => {
            let c = *c;
            accumulate(nodes, grads, *a, g.mapv(|x| x * c))
        }
        Op::Offset(a) => accumulate(nodes, grads, *a, g.clone()),
        Op::Exp(a) => accumulate(nodes, grads, *a, g * out),
        Op::Ln(a) => accumulate(nodes, grads, *a, g / val(*a)),
        Op::Tanh(a) => {
            let d = out.mapv(|y| T::one() - y * y);
            accumulate(nodes, grads, *a, g * &d)
        }
        Op::Relu(a) => {
            let d = val(*a).mapv(|x| if x > T::zero() { T::one() } else { T::zero() });
            accumulate(nodes, grads, *a, g * &d)
        }
        Op::Sigmoid(a) => {
            let d = out.mapv(|y| y * (T::one() - y));
            accumulate(nodes, grads, *a, g * &d)
        }
        Op::Softplus(a) => {
            let d = val(*a).mapv(sigmoid);
            accumulate(nodes, grads, *a, g * &d)
        }
        Op::Sqrt(a) => {
            let half = T::lit(0.5);
            let d = out.mapv(|y| half / y);
            accumulate(nodes, grads, *a, g * &d)
        }
        Op::Square(a) => {
            let d = val(*a).mapv(|x| two * x);
            accumulate(nodes, grads, *a, g * &d)
        }
        Op::Softmax(a) => {
            let dot = (g * out).sum_axis(Axis(1)).insert_axis(Axis(1));
            accumulate(nodes, grads, *a, out * &(g - &dot))
        }
        Op::LogSoftmax(a) => {
            let total = g.sum_axis(Axis(1)).insert_axis(Axis(1));
            let soft = out.mapv(|x| x.exp());
            accumulate(nodes, grads, *a, g - &(soft * &total))
        }
        Op::LogSumExp(a) => {
            let soft = (val(*a) - out).mapv(|x| x.exp());
            accumulate(nodes, grads, *a, soft * g)
        }
        Op::LayerNorm(a, eps) => {
            let x = val(*a);
            let n = T::from_usize(x.ncols()).unwrap();
            let mut ga = Array2::zeros(x.raw_dim());
            for ((xr, gr), mut dr) in x
                .rows()
                .into_iter()
                .zip(g.rows())
                .zip(ga.rows_mut())
            {
                let mean = xr.sum() / n;
                let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                let inv = T::one() / (var + *eps).sqrt();
                let g_mean = gr.sum() / n;
                let gy_mean = xr
                    .iter()
                    .zip(gr.iter())
                    .map(|(&v, &gv)| gv * (v - mean) * inv)
                    .sum::<T>()
                    / n;
                for ((d, &v), &gv) in dr.iter_mut().zip(xr.iter()).zip(gr.iter()) {
                    let y = (v - mean) * inv;
                    *d = inv * (gv - g_mean - y * gy_mean);
                }
            }
            accumulate(nodes, grads, *a, ga)
        }
        Op::Sum(a) => {
            let v = g[[0, 0]];
            accumulate(nodes, grads, *a, Array2::from_elem(val(*a).raw_dim(), v))
        }
        Op::SumRows(a) => {
            let rows = val(*a).nrows();
            let ga = g
                .broadcast((rows, g.ncols()))
                .expect("row gradient broadcast")
                .to_owned();
            accumulate(nodes, grads, *a, ga)
        }
        Op::SumCols(a) => {
            let cols = val(*a).ncols();
            let ga = g
                .broadcast((g.nrows(), cols))
                .expect("column gradient broadcast")
                .to_owned();
            accumulate(nodes, grads, *a, ga)
        }
        Op::MatMul(a, b) => {
            if nodes[*a].needs_grad {
                accumulate(nodes, grads, *a, g.dot(&val(*b).t()));
            }
            if nodes[*b].needs_grad {
                accumulate(nodes, grads, *b, val(*a).t().dot(g));
            }
        }
        Op::Transpose(a) => accumulate(nodes, grads, *a, g.t().to_owned()),
        Op::ConcatCols(parts) => {
            let mut start = 0;
            for &p in parts {
                let w = val(p).ncols();
                if nodes[p].needs_grad {
                    accumulate(nodes, grads, p, g.slice(s![.., start..start + w]).to_owned());
                }
                start += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut start = 0;
            for &p in parts {
                let h = val(p).nrows();
                if nodes[p].needs_grad {
                    accumulate(nodes, grads, p, g.slice(s![start..start + h, ..]).to_owned());
                }
                start += h;
            }
        }
        Op::SliceCols(a, start) => {
            let mut ga = Array2::zeros(val(*a).raw_dim());
            ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
            accumulate(nodes, grads, *a, ga)
        }
        Op::Reshape(a) => {
            let shape = val(*a).raw_dim();
            let flat: Vec<T> = g.iter().copied().collect();
            accumulate(
                nodes,
                grads,
                *a,
                Array2::from_shape_vec(shape, flat).expect("reshape adjoint"),
            )
        }
        Op::GatherRows(a, idx) => {
            let mut ga = Array2::zeros(val(*a).raw_dim());
            for (row, &src) in g.rows().into_iter().zip(idx.iter()) {
                let mut target = ga.row_mut(src);
                target += &row;
            }
            accumulate(nodes, grads, *a, ga)
        }
        Op::Gather(a, idx) => {
            let src = val(*a);
            let cols = src.ncols();
            let mut ga = Array2::zeros(src.raw_dim());
            for (&gv, slot) in g.iter().zip(idx.iter()) {
                if let Some(k) = slot {
                    ga[[k / cols, k % cols]] = ga[[k / cols, k % cols]] + gv;
                }
            }
            accumulate(nodes, grads, *a, ga)
        }
        Op::BatchedLeftMatMul(a, b, batch) => {
            let left = val(*a);
            let right = val(*b);
            let (d, m) = left.dim();
            if nodes[*a].needs_grad {
                let mut ga = Array2::zeros(left.raw_dim());
                for k in 0..*batch {
                    let gk = g.slice(s![k * d..(k + 1) * d, ..]);
                    let rk = right.slice(s![k * m..(k + 1) * m, ..]);
                    ga += &gk.dot(&rk.t());
                }
                accumulate(nodes, grads, *a, ga);
            }
            if nodes[*b].needs_grad {
                let mut gb = Array2::zeros(right.raw_dim());
                for k in 0..*batch {
                    let gk = g.slice(s![k * d..(k + 1) * d, ..]);
                    gb.slice_mut(s![k * m..(k + 1) * m, ..])
                        .assign(&left.t().dot(&gk));
                }
                accumulate(nodes, grads, *b, gb);
            }
        }
        Op::TraceExpm(a, expm) => {
            let v = g[[0, 0]];
            accumulate(nodes, grads, *a, expm.t().mapv(|x| x * v))
        }
        Op::StraightThrough(soft) => accumulate(nodes, grads, *soft, g.clone()),
    }
}
