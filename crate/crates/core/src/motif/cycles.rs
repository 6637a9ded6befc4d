//! Bridge detection and bounded chordless-cycle enumeration on simple
//! undirected graphs given as sorted adjacency lists.

#[inline]
fn adjacent(adj: &[Vec<usize>], a: usize, b: usize) -> bool {
    adj[a].binary_search(&b).is_ok()
}

/// Edges lying on no cycle, as `(u, v)` with `u < v`, sorted.
pub fn bridges(adj: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let n = adj.len();
    let mut order = vec![usize::MAX; n];
    let mut low = vec![usize::MAX; n];
    let mut clock = 0;
    let mut out = Vec::new();

    for root in 0..n {
        if order[root] != usize::MAX {
            continue;
        }
        order[root] = clock;
        low[root] = clock;
        clock += 1;
        // (node, parent, next neighbor slot)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        while let Some(frame) = stack.last_mut() {
            let (v, parent, slot) = *frame;
            if let Some(&w) = adj[v].get(slot) {
                frame.2 += 1;
                if w == parent {
                    continue;
                }
                if order[w] == usize::MAX {
                    order[w] = clock;
                    low[w] = clock;
                    clock += 1;
                    stack.push((w, v, 0));
                } else {
                    low[v] = low[v].min(order[w]);
                }
            } else {
                stack.pop();
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[v]);
                    if low[v] > order[parent] {
                        out.push((parent.min(v), parent.max(v)));
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// All chordless cycles with 3 to `max_len` vertices. Each cycle starts at
/// its smallest vertex and is oriented so its second vertex is smaller than
/// its last; every vertex set appears once.
pub fn chordless_cycles(adj: &[Vec<usize>], max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if max_len < 3 {
        return out;
    }
    let mut path = Vec::with_capacity(max_len);
    for s in 0..adj.len() {
        for &first in &adj[s] {
            if first <= s {
                continue;
            }
            path.clear();
            path.push(s);
            path.push(first);
            extend(adj, max_len, &mut path, &mut out);
        }
    }
    out
}

fn extend(adj: &[Vec<usize>], max_len: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let s = path[0];
    let last = *path.last().expect("path holds at least two vertices");
    for &w in &adj[last] {
        if w <= s || path.contains(&w) {
            continue;
        }
        // w may only touch `last` among interior vertices
        if path[1..path.len() - 1].iter().any(|&p| adjacent(adj, p, w)) {
            continue;
        }
        if adjacent(adj, s, w) {
            if path[1] < w {
                let mut cycle = path.clone();
                cycle.push(w);
                out.push(cycle);
            }
        } else if path.len() + 1 < max_len {
            path.push(w);
            extend(adj, max_len, path, out);
            path.pop();
        }
    }
}
