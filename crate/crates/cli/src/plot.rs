//! Generic gnuplot scripts over the emitted CSV files.

use std::path::Path;

use crate::Command;

const HEADER: &str = "set datafile separator \",\"\nset key outside\n";

fn body(cmd: Command) -> Option<&'static str> {
    let text = match cmd {
        Command::Pdf => {
            "set logscale y\nset xlabel \"t\"\nset ylabel \"F(t)\"\n\
             plot for [fw in \"strobo nhh zeno-strobo zeno-nhh corrected\"] \"pdf.csv\" \
             using 3:(strcol(2) eq fw ? $4 : NaN) with linespoints title fw\n"
        }
        Command::Stats => {
            "set logscale xy\nset xlabel \"tau\"\nset ylabel \"<T>\"\n\
             plot for [fw in \"strobo nhh zeno-strobo zeno-nhh corrected\"] \"stats.csv\" \
             using 1:(strcol(2) eq fw && strcol(4) eq \"mean\" ? $5 : NaN) with linespoints title fw\n"
        }
        Command::Zeno => {
            "set xlabel \"Re\"\nset ylabel \"Im\"\n\
             plot \"poles.csv\" using 4:5 with points title \"poles\", \
             \"poles.csv\" using 6:7 with points title \"seeds\"\n"
        }
        Command::ElectroGrid => {
            "set view map\nset xlabel \"x\"\nset ylabel \"y\"\n\
             splot \"grid.csv\" using 3:4:(strcol(2) eq \"nhh\" ? $5 : NaN) with points palette title \"nhh\"\n"
        }
        Command::Infline => {
            "set logscale xy\nset xlabel \"tau\"\nset ylabel \"delta\"\n\
             plot \"series.csv\" using 1:4 with linespoints title \"|P_strobo - (4P_nhh - 3)|\"\n"
        }
        Command::Perturb => {
            "set logscale x\nset xlabel \"epsilon\"\nset ylabel \"<T>\"\n\
             plot for [fw in \"strobo uniform distant close zeno-transition shifted shifted-formula\"] \"perturb.csv\" \
             using 2:(strcol(3) eq fw && strcol(4) eq \"mean\" ? $5 : NaN) with linespoints title fw\n"
        }
        Command::Validate => return None,
    };
    Some(text)
}

/// Writes `plot.gp` into `dir`; `validate` has nothing to plot.
pub fn write_script(dir: &Path, cmd: Command) -> std::io::Result<()> {
    if let Some(b) = body(cmd) {
        std::fs::write(dir.join("plot.gp"), format!("{HEADER}{b}"))?;
    }
    Ok(())
}
