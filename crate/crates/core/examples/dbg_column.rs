use distilltrain::column::{derive_flows, thomas_solve, ColumnSpec};
use distilltrain::thermo::{self, bundled, Stream, ATM};

fn main() {
    let comps = vec![bundled("benzene").unwrap(), bundled("toluene").unwrap()];
    let feed = Stream::new(vec![5.0, 5.0], 298.15, ATM);
    let spec = ColumnSpec { pressure: ATM, n_stages: 20, reflux_ratio: 100.0, boilup_ratio: 100.0 };

    let n = spec.n_stages;
    let total = n + 2;
    let feed_tray = n.div_ceil(2);
    let z = feed.mole_fractions().unwrap();
    let flash = thermo::flash_feed(&comps, &z, feed.temperature, spec.pressure).unwrap();
    let flows = derive_flows(feed.total_flow(), flash.q, spec.reflux_ratio, spec.boilup_ratio);
    println!("q={} flows={:?}", flash.q, flows);
    let (tb, _) = thermo::bubble_point(&comps, &z, spec.pressure).unwrap();
    let (td, _) = thermo::dew_point(&comps, &z, spec.pressure).unwrap();
    let mut temps: Vec<f64> = (0..total).map(|j| tb + (td - tb) * j as f64 / (total - 1) as f64).collect();
    let mut k: Vec<Vec<f64>> = temps.iter().map(|&t| thermo::k_values(&comps, t, spec.pressure).unwrap()).collect();

    let vapor_at = |j: usize| if j <= feed_tray { flows.vapor_rect } else { flows.vapor_strip };
    let liquid_at = |j: usize| if j == 0 { flows.liquid_rect } else if j < feed_tray { flows.liquid_rect } else if j <= n { flows.liquid_strip } else { flows.bottoms };

    let mut liquid = vec![vec![0.0f64; total]; 2];
    let mut hist: Vec<Vec<f64>> = Vec::new();
    for sweep in 0..20000 {
        for i in 0..2 {
            let strip = |j: usize| k[j][i] * vapor_at(j) / liquid_at(j);
            let mut lower = vec![0.0; total];
            let mut diag = vec![0.0; total];
            let mut upper = vec![0.0; total];
            let mut rhs = vec![0.0; total];
            diag[0] = 1.0 + 1.0 / spec.reflux_ratio;
            upper[0] = -strip(1);
            for j in 1..=n {
                lower[j] = -1.0;
                diag[j] = 1.0 + strip(j);
                upper[j] = -strip(j + 1);
                if j == feed_tray { rhs[j] = feed.flows[i]; }
            }
            lower[n + 1] = -1.0;
            diag[n + 1] = 1.0 + strip(n + 1);
            liquid[i] = thomas_solve(&lower, &diag, &upper, &rhs).unwrap();
        }
        let mut max_dt = 0.0f64;
        let mut neg = 0;
        for j in 0..total {
            let mut x = [0.0f64; 2];
            let mut tot = 0.0;
            for i in 0..2 {
                if liquid[i][j] < 0.0 { neg += 1; }
                x[i] = liquid[i][j].max(0.0);
                tot += x[i];
            }
            if tot <= 0.0 { println!("sweep {sweep}: empty stage {j}"); return; }
            x[0] /= tot; x[1] /= tot;
            let (t_new, _) = thermo::bubble_point(&comps, &x, spec.pressure).unwrap();
            max_dt = max_dt.max((t_new - temps[j]).abs());
            temps[j] = t_new;
            k[j] = thermo::k_values(&comps, t_new, spec.pressure).unwrap();
        }
        if sweep % 500 == 0 || max_dt < 0.01 {
            println!("sweep {sweep}: max_dt = {max_dt:.5}, negatives = {neg}, d=({:.4},{:.6}) b=({:.6},{:.4})",
                liquid[0][0]/100.0, liquid[1][0]/100.0, liquid[0][n+1], liquid[1][n+1]);
        }
        if max_dt < 0.01 { println!("converged at sweep {sweep}"); return; }
        hist.push(temps.clone());
        if hist.len() >= 3 && sweep % 4 == 3 {
            let m = hist.len();
            let mut jumped = 0;
            for j in 0..total {
                let d1 = hist[m-1][j] - hist[m-2][j];
                let d0 = hist[m-2][j] - hist[m-3][j];
                let denom = d1 - d0;
                if denom.abs() > 1e-12 && d1 * d0 > 0.0 && d1.abs() < d0.abs() {
                    let t_star = hist[m-1][j] - d1 * d1 / denom;
                    if (t_star - temps[j]).abs() < 50.0 {
                        temps[j] = t_star;
                        k[j] = thermo::k_values(&comps, t_star, spec.pressure).unwrap();
                        jumped += 1;
                    }
                }
            }
            if sweep < 40 { println!("  sweep {sweep}: aitken jumped {jumped} stages"); }
            hist.clear();
        }
    }
    println!("NOT converged; temps = {:?}", temps.iter().map(|t| (t*100.0).round()/100.0).collect::<Vec<_>>());
}
