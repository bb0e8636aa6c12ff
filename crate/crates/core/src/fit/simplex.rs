//! Two-dimensional Nelder–Mead minimizer.

#[derive(Debug, Clone, Copy)]
pub(crate) struct SimplexOptions {
    pub max_evals: usize,
    /// Stop once every vertex lies within this distance of the best vertex,
    /// coordinate-wise.
    pub xtol: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SimplexResult {
    pub x: [f64; 2],
    #[cfg_attr(not(test), allow(dead_code))]
    pub value: f64,
}

/// Minimizes `f` from `start`, with the initial simplex spanned by `steps`.
///
/// The returned point is never worse than `start`.
pub(crate) fn minimize<F>(mut f: F, start: [f64; 2], steps: [f64; 2], opts: SimplexOptions) -> SimplexResult
where
    F: FnMut([f64; 2]) -> f64,
{
    let mut pts = [
        start,
        [start[0] + steps[0], start[1]],
        [start[0], start[1] + steps[1]],
    ];
    let mut vals = [f(pts[0]), f(pts[1]), f(pts[2])];
    let mut evals = 3;

    loop {
        // order: best, middle, worst
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        pts = [pts[idx[0]], pts[idx[1]], pts[idx[2]]];
        vals = [vals[idx[0]], vals[idx[1]], vals[idx[2]]];

        let spread = pts[1..]
            .iter()
            .flat_map(|p| [(p[0] - pts[0][0]).abs(), (p[1] - pts[0][1]).abs()])
            .fold(0.0, f64::max);
        if spread < opts.xtol || evals >= opts.max_evals {
            break;
        }

        let centroid = [(pts[0][0] + pts[1][0]) / 2.0, (pts[0][1] + pts[1][1]) / 2.0];
        let along = |t: f64| {
            [
                centroid[0] + t * (pts[2][0] - centroid[0]),
                centroid[1] + t * (pts[2][1] - centroid[1]),
            ]
        };

        let xr = along(-1.0);
        let fr = f(xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(xe);
            evals += 1;
            if fe < fr {
                pts[2] = xe;
                vals[2] = fe;
            } else {
                pts[2] = xr;
                vals[2] = fr;
            }
            continue;
        }
        if fr < vals[1] {
            pts[2] = xr;
            vals[2] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[2] {
            let xc = along(-0.5);
            (xc, f(xc))
        } else {
            let xc = along(0.5);
            (xc, f(xc))
        };
        evals += 1;
        if fc < vals[2].min(fr) {
            pts[2] = xc;
            vals[2] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..3 {
            pts[i] = [
                pts[0][0] + 0.5 * (pts[i][0] - pts[0][0]),
                pts[0][1] + 0.5 * (pts[i][1] - pts[0][1]),
            ];
            vals[i] = f(pts[i]);
        }
        evals += 2;
    }

    SimplexResult {
        x: pts[0],
        value: vals[0],
    }
}
