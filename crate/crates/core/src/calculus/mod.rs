//! Exact constructive operations on ReLU networks.
//!
//! Every operation returns a network whose realization is a fixed functional
//! combination of the realizations of its inputs, and checks the matching
//! size bound from [`bounds`] on the result.

pub mod bounds;
mod square;
pub mod suite;

pub use square::{
    sawtooth_terms, square_unit_net, weighted_square_net, TruncatedSquare, WEIGHTED_SQUARE_CONST,
};

use crate::error::{shape, Error, Result};
use crate::nn::{fold_affine, Layer, Matrix, Network, Side};

fn zero_bias(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

fn stacked_identity(d: usize) -> Matrix {
    Matrix::vstack(&[&Matrix::identity(d), &Matrix::identity(d).scaled(-1.0)])
}

fn split_identity(d: usize) -> Matrix {
    Matrix::hstack(&[&Matrix::identity(d), &Matrix::identity(d).scaled(-1.0)])
}

fn same_arch(nets: &[&Network], what: &str) -> Result<()> {
    let first = nets[0].arch();
    for (i, n) in nets.iter().enumerate().skip(1) {
        if n.arch() != first {
            return Err(Error::Architecture(format!(
                "{what}: network {i} has dims {:?}, expected {:?}",
                n.dims(),
                first.dims
            )));
        }
    }
    Ok(())
}

/// Identity on `R^d` with `L` layers: `((I,0))` or `([I;-I]), (I_2d)…, ([I,-I])`.
pub fn identity_net(d: usize, depth: usize) -> Network {
    assert!(d >= 1 && depth >= 1, "identity_net needs d >= 1 and L >= 1");
    if depth == 1 {
        return Network::affine(Matrix::identity(d), zero_bias(d)).unwrap();
    }
    let mut layers = vec![Layer::new(stacked_identity(d), zero_bias(2 * d)).unwrap()];
    for _ in 0..depth - 2 {
        layers.push(Layer::new(Matrix::identity(2 * d), zero_bias(2 * d)).unwrap());
    }
    layers.push(Layer::new(split_identity(d), zero_bias(d)).unwrap());
    Network::new(layers).unwrap()
}

/// `outer ∘ inner`, joined through a `±` pair of ReLU channels.
pub fn compose(outer: &Network, inner: &Network) -> Result<Network> {
    if outer.dim_in() != inner.dim_out() {
        return Err(shape(format!(
            "compose: outer expects {} inputs, inner produces {}",
            outer.dim_in(),
            inner.dim_out()
        )));
    }
    let mut layers: Vec<Layer> = inner.layers()[..inner.depth() - 1].to_vec();
    let last = &inner.layers()[inner.depth() - 1];
    let w = Matrix::vstack(&[last.weight(), &last.weight().scaled(-1.0)]);
    let b: Vec<f64> = last
        .bias()
        .iter()
        .copied()
        .chain(last.bias().iter().map(|v| -v))
        .collect();
    layers.push(Layer::new(w, b)?);
    let first = &outer.layers()[0];
    let w = Matrix::hstack(&[first.weight(), &first.weight().scaled(-1.0)]);
    layers.push(Layer::new(w, first.bias().to_vec())?);
    layers.extend_from_slice(&outer.layers()[1..]);
    let net = Network::new(layers)?;
    assert!(
        net.size() <= bounds::compose(outer.size(), inner.size()),
        "compose size bound"
    );
    Ok(net)
}

/// Same realization with depth increased to `depth`.
pub fn extend_depth(net: &Network, depth: usize) -> Result<Network> {
    if depth <= net.depth() {
        return Err(crate::error::param(format!(
            "extend_depth: target depth {depth} must exceed current depth {}",
            net.depth()
        )));
    }
    let id = identity_net(net.dim_out(), depth - net.depth());
    let out = compose(&id, net)?;
    assert!(
        out.size() <= bounds::compose(id.size(), net.size()),
        "extension size bound"
    );
    Ok(out)
}

/// Adds one dead neuron to hidden layer `l` (1-based).
pub fn widen_layer(net: &Network, l: usize) -> Result<Network> {
    if l == 0 || l >= net.depth() {
        return Err(crate::error::param(format!(
            "widen_layer: layer {l} is not a hidden layer of a depth-{} network",
            net.depth()
        )));
    }
    let mut layers = net.layers().to_vec();
    let (w, mut b) = layers[l - 1].clone().into_parts();
    let w = w.padded(w.rows() + 1, w.cols());
    b.push(0.0);
    layers[l - 1] = Layer::new(w, b)?;
    let (w, b) = layers[l].clone().into_parts();
    layers[l] = Layer::new(w.padded(w.rows(), w.cols() + 1), b)?;
    Network::new(layers)
}

/// `Σ β_m net_m` for networks of identical architecture.
pub fn combine(coeffs: &[f64], nets: &[Network]) -> Result<Network> {
    if nets.is_empty() || coeffs.len() != nets.len() {
        return Err(shape(format!(
            "combine: {} coefficients for {} networks",
            coeffs.len(),
            nets.len()
        )));
    }
    let refs: Vec<&Network> = nets.iter().collect();
    same_arch(&refs, "combine")?;
    let depth = nets[0].depth();
    let out_dim = nets[0].dim_out();
    let last_bias = |l: usize| -> Vec<f64> {
        let mut b = zero_bias(out_dim);
        for (beta, n) in coeffs.iter().zip(nets) {
            for (acc, v) in b.iter_mut().zip(n.layers()[l].bias()) {
                *acc += beta * v;
            }
        }
        b
    };
    let net = if depth == 1 {
        let mut w = Matrix::zeros(out_dim, nets[0].dim_in());
        for (beta, n) in coeffs.iter().zip(nets) {
            w = w.add(&n.layers()[0].weight().scaled(*beta));
        }
        Network::affine(w, last_bias(0))?
    } else {
        let mut layers = Vec::with_capacity(depth);
        let ws: Vec<&Matrix> = nets.iter().map(|n| n.layers()[0].weight()).collect();
        let b: Vec<f64> = nets
            .iter()
            .flat_map(|n| n.layers()[0].bias().iter().copied())
            .collect();
        layers.push(Layer::new(Matrix::vstack(&ws), b)?);
        for l in 1..depth - 1 {
            let ws: Vec<&Matrix> = nets.iter().map(|n| n.layers()[l].weight()).collect();
            let b: Vec<f64> = nets
                .iter()
                .flat_map(|n| n.layers()[l].bias().iter().copied())
                .collect();
            layers.push(Layer::new(Matrix::block_diag(&ws), b)?);
        }
        let scaled: Vec<Matrix> = coeffs
            .iter()
            .zip(nets)
            .map(|(beta, n)| n.layers()[depth - 1].weight().scaled(*beta))
            .collect();
        let refs: Vec<&Matrix> = scaled.iter().collect();
        layers.push(Layer::new(Matrix::hstack(&refs), last_bias(depth - 1))?);
        Network::new(layers)?
    };
    assert!(
        net.size() <= bounds::combine(nets.len(), nets[0].size()),
        "combine size bound"
    );
    Ok(net)
}

/// Dimensions of `combine` over `m` copies of an architecture, without building it.
pub fn combined_dims(dims: &[usize], m: usize) -> Vec<usize> {
    let last = dims.len() - 1;
    dims.iter()
        .enumerate()
        .map(|(i, &n)| if i == 0 || i == last { n } else { n * m })
        .collect()
}

/// `x ↦ (a(x), b(x))` for two networks of identical architecture.
pub fn parallel_shared(a: &Network, b: &Network) -> Result<Network> {
    same_arch(&[a, b], "parallel_shared")?;
    let mut layers = Vec::with_capacity(a.depth());
    for (l, (la, lb)) in a.layers().iter().zip(b.layers()).enumerate() {
        let w = if l == 0 {
            Matrix::vstack(&[la.weight(), lb.weight()])
        } else {
            Matrix::block_diag(&[la.weight(), lb.weight()])
        };
        let bias = la.bias().iter().chain(lb.bias()).copied().collect();
        layers.push(Layer::new(w, bias)?);
    }
    let net = Network::new(layers)?;
    assert!(
        net.size() <= bounds::parallel(a.size(), b.size()),
        "parallel size bound"
    );
    Ok(net)
}

/// Realizes `x ↦ y + Σ_m branch_m(y, u)` with `y = base(x)`.
///
/// `base` maps `R^d → R^d`; each branch maps `R^{d+d'} → R^d` and all
/// branches share one depth `L'`. For `L' = 1` the branches are folded into
/// the last layer of `base`; otherwise `y` is carried through `L' − 1` hidden
/// layers as `(ϱ(y), ϱ(−y))` next to the branch layers.
pub fn add_compose(base: &Network, branches: &[Network], u: &[f64]) -> Result<Network> {
    let d = base.dim_out();
    if base.dim_in() != d {
        return Err(shape(format!(
            "add_compose: base maps R^{} to R^{d}",
            base.dim_in()
        )));
    }
    if branches.is_empty() {
        return Ok(base.clone());
    }
    let depth_b = branches[0].depth();
    for (m, br) in branches.iter().enumerate() {
        if br.depth() != depth_b {
            return Err(Error::Architecture(format!(
                "add_compose: branch {m} has depth {}, branch 0 has depth {depth_b}",
                br.depth()
            )));
        }
        if br.dim_in() != d + u.len() {
            return Err(shape(format!(
                "add_compose: branch {m} takes {} inputs, expected d + len(u) = {}",
                br.dim_in(),
                d + u.len()
            )));
        }
        if br.dim_out() != d {
            return Err(shape(format!(
                "add_compose: branch {m} outputs {} values, expected {d}",
                br.dim_out()
            )));
        }
    }
    let lb = base.depth();
    let (wl, bl) = {
        let last = &base.layers()[lb - 1];
        (last.weight(), last.bias())
    };
    // First branch layer applied to (W_L x + b_L, u): weight on x-part, constant part.
    let entry: Vec<(Matrix, Vec<f64>)> = branches
        .iter()
        .map(|br| {
            let v = br.layers()[0].weight();
            let vx = select_cols(v, 0, d);
            let vu = select_cols(v, d, d + u.len());
            let w = vx.matmul(wl);
            let mut c = vx.mul_vec(bl);
            for ((ci, a), b) in c.iter_mut().zip(vu.mul_vec(u)).zip(br.layers()[0].bias()) {
                *ci += a + b;
            }
            (w, c)
        })
        .collect();

    let mut layers: Vec<Layer> = base.layers()[..lb - 1].to_vec();
    if depth_b == 1 {
        let mut w = wl.clone();
        let mut b = bl.to_vec();
        for (wm, cm) in &entry {
            w = w.add(wm);
            for (acc, v) in b.iter_mut().zip(cm) {
                *acc += v;
            }
        }
        layers.push(Layer::new(w, b)?);
    } else {
        let carry = Matrix::vstack(&[wl, &wl.scaled(-1.0)]);
        let mut blocks: Vec<&Matrix> = vec![&carry];
        blocks.extend(entry.iter().map(|(w, _)| w));
        let mut bias: Vec<f64> = bl.iter().copied().chain(bl.iter().map(|v| -v)).collect();
        for (_, c) in &entry {
            bias.extend_from_slice(c);
        }
        layers.push(Layer::new(Matrix::vstack(&blocks), bias)?);

        let relay = Matrix::vstack(&[&split_identity(d), &split_identity(d).scaled(-1.0)]);
        for k in 1..depth_b - 1 {
            let mut blocks: Vec<&Matrix> = vec![&relay];
            blocks.extend(branches.iter().map(|br| br.layers()[k].weight()));
            let mut bias = zero_bias(2 * d);
            for br in branches {
                bias.extend_from_slice(br.layers()[k].bias());
            }
            layers.push(Layer::new(Matrix::block_diag(&blocks), bias)?);
        }

        let out = split_identity(d);
        let mut blocks: Vec<&Matrix> = vec![&out];
        blocks.extend(branches.iter().map(|br| br.layers()[depth_b - 1].weight()));
        let mut bias = zero_bias(d);
        for br in branches {
            for (acc, v) in bias.iter_mut().zip(br.layers()[depth_b - 1].bias()) {
                *acc += v;
            }
        }
        layers.push(Layer::new(Matrix::hstack(&blocks), bias)?);
    }
    let net = Network::new(layers)?;
    if add_compose_width_condition(base, branches) {
        let sup = branches.iter().map(Network::size).max().unwrap();
        assert!(
            net.size() <= bounds::add_compose(base.size(), branches.len(), sup, d),
            "add_compose size bound"
        );
    }
    Ok(net)
}

/// Width condition under which the add-and-compose size bound applies:
/// the last hidden width of `base` does not exceed `2d + Σ_m N^{(m)}_{L'-1}`.
pub fn add_compose_width_condition(base: &Network, branches: &[Network]) -> bool {
    let d = base.dim_out();
    let dims = base.dims();
    let base_hidden = dims[dims.len() - 2];
    let branch_hidden: usize = branches.iter().map(|br| br.dims()[br.depth() - 1]).sum();
    base_hidden <= 2 * d + branch_hidden
}

fn select_cols(m: &Matrix, from: usize, to: usize) -> Matrix {
    let mut t = Vec::new();
    for i in 0..m.rows() {
        for (j, v) in m.row(i) {
            if j >= from && j < to {
                t.push((i, j - from, v));
            }
        }
    }
    Matrix::from_triplets(m.rows(), to - from, t)
}

/// Two-input maximum: `max(a, b) = ½(|a−b| + a + b)`, size 17.
pub fn psi_max() -> Network {
    Network::new(vec![
        Layer::dense(
            &[
                vec![1.0, -1.0],
                vec![-1.0, 1.0],
                vec![1.0, 1.0],
                vec![-1.0, -1.0],
            ],
            zero_bias(4),
        )
        .unwrap(),
        Layer::dense(&[vec![0.5, 0.5, 0.5, -0.5]], vec![0.0]).unwrap(),
    ])
    .unwrap()
}

/// Pointwise maximum of `2^n` scalar networks of identical architecture.
pub fn max_tree(nets: &[Network]) -> Result<Network> {
    if nets.is_empty() || !nets.len().is_power_of_two() {
        return Err(crate::error::param(format!(
            "max_tree: {} networks is not a power of two",
            nets.len()
        )));
    }
    let refs: Vec<&Network> = nets.iter().collect();
    same_arch(&refs, "max_tree")?;
    if nets[0].dim_out() != 1 {
        return Err(shape(format!(
            "max_tree: networks must be scalar, got output width {}",
            nets[0].dim_out()
        )));
    }
    let n = nets.len().trailing_zeros();
    let c0 = nets[0].size();
    let psi = psi_max();
    let mut level: Vec<Network> = nets.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| compose(&psi, &parallel_shared(&pair[0], &pair[1])?))
            .collect::<Result<_>>()?;
    }
    let out = level.pop().unwrap();
    assert!(out.size() <= bounds::max_tree(n, c0), "max_tree size bound");
    Ok(out)
}

/// Pointwise minimum, as `−max(−·)`.
pub fn min_tree(nets: &[Network]) -> Result<Network> {
    let neg = Matrix::identity(1).scaled(-1.0);
    let negated = nets
        .iter()
        .map(|n| fold_affine(n, Side::Post, &neg, &[0.0]))
        .collect::<Result<Vec<_>>>()?;
    let tree = max_tree(&negated)?;
    fold_affine(&tree, Side::Post, &neg, &[0.0])
}

/// Repeats the final network until the count is a power of two.
pub fn pad_pow2(nets: &[Network]) -> Vec<Network> {
    let mut out = nets.to_vec();
    if let Some(last) = nets.last() {
        while !out.len().is_power_of_two() {
            out.push(last.clone());
        }
    }
    out
}

pub fn max_tree_padded(nets: &[Network]) -> Result<Network> {
    max_tree(&pad_pow2(nets))
}

pub fn min_tree_padded(nets: &[Network]) -> Result<Network> {
    min_tree(&pad_pow2(nets))
}
