//! The exhaustive small family and an independent canonical-string oracle.

use std::collections::HashMap;

use feinsum::model::{ArrayMeta, BatchedEinsum, DtypeCode, IndexList};

/// Oracle canonical string: minimum over row and slot orders of the
/// first-occurrence renaming.
pub fn brute_canonical(e: &BatchedEinsum) -> String {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for k in 0..n {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }
    let mut best: Option<String> = None;
    for rows in perms(e.b()) {
        for slots in perms(e.n()) {
            let mut idx: HashMap<&str, usize> = HashMap::new();
            for &j in &slots {
                for s in e.i_in[j].iter() {
                    let next = idx.len();
                    idx.entry(s.as_str()).or_insert(next);
                }
            }
            let mut arr: HashMap<&str, usize> = HashMap::new();
            let mut s = String::new();
            for &j in &slots {
                let l: Vec<usize> = e.i_in[j].iter().map(|x| idx[x.as_str()]).collect();
                s += &format!("{l:?};");
            }
            let o: Vec<usize> = e.i_out.iter().map(|x| idx[x.as_str()]).collect();
            s += &format!("->{o:?}|");
            for &i in &rows {
                for &j in &slots {
                    let a = &e.args[i][j];
                    let next = arr.len();
                    let id = *arr.entry(a.name.as_str()).or_insert(next);
                    s += &format!("{id}:{}:{:?},", a.dtype, a.shape);
                }
                s += ";";
            }
            if best.as_ref().is_none_or(|b| s < *b) {
                best = Some(s);
            }
        }
    }
    best.unwrap()
}

/// All einsums with b <= 2, n <= 2, at most 3 indices, operand rank <= 2,
/// lengths {2, 3} and dtypes {float32, float64}, up to renaming.
pub fn small_family() -> Vec<BatchedEinsum> {
    let mut lists: Vec<Vec<Vec<usize>>> = Vec::new();
    // index lists in restricted-growth form across slots
    fn grow(acc: &mut Vec<Vec<Vec<usize>>>, cur: &mut Vec<Vec<usize>>, n: usize, used: usize) {
        if cur.len() == n {
            acc.push(cur.clone());
            return;
        }
        for rank in 1..=2 {
            let mut stack: Vec<(Vec<usize>, usize)> = vec![(vec![], used)];
            while let Some((l, u)) = stack.pop() {
                if l.len() == rank {
                    cur.push(l);
                    grow(acc, cur, n, u);
                    cur.pop();
                    continue;
                }
                for s in 0..=u.min(2) {
                    if s < 3 {
                        let mut l2 = l.clone();
                        l2.push(s);
                        stack.push((l2, u.max(s + 1)));
                    }
                }
            }
        }
    }
    for n in 1..=2 {
        grow(&mut lists, &mut Vec::new(), n, 0);
    }
    let names = ["i", "j", "k"];
    let dtypes = [DtypeCode::Float32, DtypeCode::Float64];
    let mut out = Vec::new();
    for ins in &lists {
        let k = ins.iter().flatten().max().unwrap() + 1;
        // ordered subsets of 0..k as outputs
        let mut outs: Vec<Vec<usize>> = vec![vec![]];
        let mut frontier = vec![vec![]];
        while let Some(o) = frontier.pop() {
            for s in 0..k {
                if !o.contains(&s) {
                    let mut o2: Vec<usize> = o.clone();
                    o2.push(s);
                    outs.push(o2.clone());
                    frontier.push(o2);
                }
            }
        }
        for lens_mask in 0..(1u32 << k) {
            let len = |s: usize| if lens_mask >> s & 1 == 1 { 3 } else { 2 };
            for o in &outs {
                for b in 1..=2 {
                    let n = ins.len();
                    let positions = b * n;
                    // each position: reuse an earlier array (by id) or a fresh one with a dtype
                    let mut choices: Vec<Vec<(usize, usize)>> = vec![vec![]];
                    for p in 0..positions {
                        let mut next = Vec::new();
                        for c in &choices {
                            let fresh = c.iter().map(|&(id, _)| id + 1).max().unwrap_or(0);
                            for id in 0..=fresh {
                                for d in 0..2 {
                                    if id < fresh && d > 0 {
                                        continue;
                                    }
                                    let mut c2 = c.clone();
                                    c2.push((
                                        id,
                                        if id < fresh {
                                            c.iter().find(|x| x.0 == id).unwrap().1
                                        } else {
                                            d
                                        },
                                    ));
                                    next.push(c2);
                                }
                            }
                        }
                        let _ = p;
                        choices = next;
                    }
                    for c in choices {
                        let shape_of =
                            |j: usize| -> Vec<usize> { ins[j].iter().map(|&s| len(s)).collect() };
                        let ok = c.iter().enumerate().all(|(p, &(id, _))| {
                            let first = c.iter().position(|x| x.0 == id).unwrap();
                            shape_of(p % n) == shape_of(first % n)
                        });
                        if !ok {
                            continue;
                        }
                        let args = (0..b)
                            .map(|i| {
                                (0..n)
                                    .map(|j| {
                                        let (id, d) = c[i * n + j];
                                        ArrayMeta::new(format!("T{id}"), shape_of(j), dtypes[d])
                                    })
                                    .collect()
                            })
                            .collect();
                        let e = BatchedEinsum::new(
                            IndexList::new(o.iter().map(|&s| names[s])),
                            ins.iter()
                                .map(|l| IndexList::new(l.iter().map(|&s| names[s])))
                                .collect(),
                            args,
                        );
                        if e.check().is_ok() {
                            out.push(e);
                        }
                    }
                }
            }
        }
    }
    out
}
