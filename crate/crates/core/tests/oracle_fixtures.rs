//! Regenerates frozen dense-oracle data. Run with
//! `cargo test --release --test oracle_fixtures -- --ignored`.

mod common;

use common::*;
use std::io::Write;
use vibronic_mpo::oracle::{dense_product_state, DenseModel};
use vibronic_mpo::state::InitialElectronic;

#[test]
#[ignore = "takes about 45 minutes on one core"]
fn regenerate_dimer_dense_oracle() {
    let spec = comparison_dimer();
    let model = DenseModel::new(&spec).unwrap();
    let rho_e = InitialElectronic::Site(0).density_matrix(&spec).unwrap();
    let rho0 = dense_product_state(&spec, &rho_e).unwrap();
    let mut rows = Vec::new();
    model
        .evolve(&rho0, DIMER_ORACLE_T_FINAL, DIMER_ORACLE_SAMPLE, |t, rho| {
            let p = model.populations(rho);
            let tr: f64 = rho.diag().iter().map(|z| z.re).sum();
            rows.push(format!("{t:.3},{:.15e},{:.15e},{:.15e}", p[0], p[1], tr));
            eprintln!("t = {t}");
            Ok(())
        })
        .unwrap();
    let mut f = std::fs::File::create(fixture_path(DIMER_ORACLE_FIXTURE)).unwrap();
    writeln!(f, "time_fs,site_1,site_2,trace").unwrap();
    for r in rows {
        writeln!(f, "{r}").unwrap();
    }
}
