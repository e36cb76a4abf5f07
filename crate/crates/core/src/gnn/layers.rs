use crate::diff::{Tape, Tensor, Var};

fn zeros_like_rows(tape: &mut Tape, rows: usize, cols: usize) -> Var {
    tape.constant(Tensor::zeros(rows, cols))
}

fn first_rows(tape: &Tape, h: &[Option<Var>]) -> usize {
    h.iter().flatten().map(|&v| tape.value(v).rows).next().expect("no node values")
}

/// Mean-aggregator SAGE layer: `act(W [h_i, mean_{u in N(i)} h_u] + b)` for
/// every node in `nodes`. An empty neighbourhood aggregates to zeros.
///
/// `h[i]` is a `batch x in` block; nodes not listed in `nodes` yield `None`.
#[allow(clippy::too_many_arguments)]
pub fn sage_conv(
    tape: &mut Tape,
    h: &[Option<Var>],
    neighbours: &[Vec<usize>],
    w: Var,
    b: Var,
    activate: bool,
    nodes: &[usize],
) -> Vec<Option<Var>> {
    let rows = first_rows(tape, h);
    let mut out = vec![None; h.len()];
    for &i in nodes {
        let own = h[i].expect("self embedding missing");
        let width = tape.value(own).cols;
        let agg = if neighbours[i].is_empty() {
            zeros_like_rows(tape, rows, width)
        } else {
            let xs: Vec<Var> = neighbours[i].iter().map(|&u| h[u].expect("neighbour embedding missing")).collect();
            tape.mean(&xs)
        };
        let joined = tape.concat(own, agg);
        let y = tape.linear(joined, w, b);
        out[i] = Some(if activate { tape.relu(y) } else { y });
    }
    out
}

/// Edge-conditioned layer:
/// `act((1/|N(i)|) sum_j F(e_ji) h_j + b)`, where the filter for attribute `e`
/// is the `out x in` matrix `reshape(e * filter_w + filter_b)`.
///
/// Edges sharing an attribute share a filter, so each attribute group is
/// averaged first and transformed once. An empty neighbourhood gives `b`,
/// broadcast to `batch` rows.
#[allow(clippy::too_many_arguments)]
pub fn ecc_conv(
    tape: &mut Tape,
    h: &[Option<Var>],
    neighbours: &[Vec<(usize, f64)>],
    filter_w: Var,
    filter_b: Var,
    bias: Var,
    out_dim: usize,
    batch: usize,
    activate: bool,
    nodes: &[usize],
) -> Vec<Option<Var>> {
    let mut out = vec![None; h.len()];
    for &i in nodes {
        let nb = &neighbours[i];
        let mut acc = None;
        if !nb.is_empty() {
            let mut attrs: Vec<f64> = nb.iter().map(|&(_, a)| a).collect();
            attrs.sort_by(f64::total_cmp);
            attrs.dedup();
            for attr in attrs {
                let group: Vec<Var> = nb
                    .iter()
                    .filter(|&&(_, a)| a == attr)
                    .map(|&(j, _)| h[j].expect("neighbour embedding missing"))
                    .collect();
                let in_dim = tape.value(group[0]).cols;
                let mean = tape.mean(&group);
                let filter = tape.edge_filter(filter_w, filter_b, attr, out_dim, in_dim);
                let mut msg = tape.matmul_t(mean, filter);
                if group.len() != nb.len() {
                    msg = tape.scale(msg, group.len() as f64 / nb.len() as f64);
                }
                acc = Some(match acc {
                    None => msg,
                    Some(a) => tape.add(a, msg),
                });
            }
        }
        let base = match acc {
            Some(a) => a,
            None => zeros_like_rows(tape, batch, out_dim),
        };
        let y = tape.add_row(base, bias);
        out[i] = Some(if activate { tape.relu(y) } else { y });
    }
    out
}
