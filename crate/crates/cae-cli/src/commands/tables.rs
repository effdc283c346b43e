//! Table aggregation shared by `eval` (which writes raw per-sample logs
//! and renders them) and `report` (which re-renders tables from the logs
//! alone). Rendering is a pure function of the log bytes, so regenerated
//! tables are byte-identical.

use anyhow::Context;
use std::collections::BTreeMap;

/// A rendered table: a header row plus data rows, all cells stringified.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} |\n", self.header.join(" | "));
        out.push_str(&format!(
            "|{}\n",
            " --- |".repeat(self.header.len())
        ));
        for row in &self.rows {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        out
    }

    /// Total cell count, header included.
    #[cfg(test)]
    pub fn cells(&self) -> usize {
        self.header.len() + self.rows.iter().map(|r| r.len()).sum::<usize>()
    }
}

/// The experiments whose raw logs this module knows how to aggregate.
pub const KNOWN_EXPERIMENTS: &[&str] =
    &["table1", "table2", "table3", "table5", "table8", "decouple"];

/// Aggregates one experiment's raw per-sample log into its table.
pub fn aggregate(name: &str, raw: &str) -> anyhow::Result<Table> {
    match name {
        "table1" => agg_table1(raw),
        "table2" => agg_table2(raw),
        "table3" => agg_table3(raw),
        "table5" => agg_table5(raw),
        "table8" => agg_table8(raw),
        "decouple" => agg_decouple(raw),
        other => anyhow::bail!("no aggregator for experiment {other:?}"),
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

/// Parses a raw log into rows, checking the expected header.
fn parse(raw: &str, want_header: &str) -> anyhow::Result<Vec<Vec<String>>> {
    let mut lines = raw.lines();
    let header = lines.next().context("empty log")?;
    anyhow::ensure!(
        header == want_header,
        "log header {header:?} does not match {want_header:?}"
    );
    let width = want_header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(str::to_owned).collect();
        anyhow::ensure!(
            cells.len() == width,
            "log line {}: {} cells, expected {width}",
            i + 2,
            cells.len()
        );
        rows.push(cells);
    }
    anyhow::ensure!(!rows.is_empty(), "log has a header but no rows");
    Ok(rows)
}

fn field<T: std::str::FromStr>(row: &[String], i: usize) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    row[i]
        .parse::<T>()
        .map_err(|e| anyhow::anyhow!("bad field {i} {:?}: {e}", row[i]))
}

pub const TABLE1_HEADER: &str = "id,true,pseudo,dist,branch,label,list_size,covered";

fn agg_table1(raw: &str) -> anyhow::Result<Table> {
    let rows = parse(raw, TABLE1_HEADER)?;
    let n = rows.len() as f64;
    let mut correct = 0usize;
    let mut wrong = 0usize;
    let mut flagged = 0usize;
    let mut covered = 0usize;
    let mut size_sum = 0usize;
    let mut singletons = 0usize;
    for r in &rows {
        let truth: i64 = field(r, 1)?;
        let label: i64 = field(r, 5)?;
        let size: usize = field(r, 6)?;
        if label < 0 {
            flagged += 1;
        } else if label == truth {
            correct += 1;
        } else {
            wrong += 1;
        }
        if field::<u8>(r, 7)? == 1 {
            covered += 1;
        }
        size_sum += size;
        if size == 1 {
            singletons += 1;
        }
    }
    Ok(Table {
        name: "table1".into(),
        header: [
            "samples",
            "cae_accuracy",
            "cae_wrong",
            "cae_flagged",
            "lcae_coverage",
            "mean_list_size",
            "singleton_share",
        ]
        .map(String::from)
        .to_vec(),
        rows: vec![vec![
            rows.len().to_string(),
            pct(correct as f64 / n),
            pct(wrong as f64 / n),
            pct(flagged as f64 / n),
            pct(covered as f64 / n),
            format!("{:.2}", size_sum as f64 / n),
            pct(singletons as f64 / n),
        ]],
    })
}

pub const TABLE2_HEADER: &str = "kind,target,id,flagged";

fn agg_table2(raw: &str) -> anyhow::Result<Table> {
    let rows = parse(raw, TABLE2_HEADER)?;
    // kind -> target -> (flagged, total), kinds in first-seen order.
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for r in &rows {
        let kind = r[0].clone();
        if !order.contains(&kind) {
            order.push(kind.clone());
        }
        let e = acc.entry((kind, r[1].clone())).or_insert((0, 0));
        e.1 += 1;
        if field::<u8>(r, 3)? == 1 {
            e.0 += 1;
        }
    }
    let cell = |kind: &str, target: &str| -> String {
        match acc.get(&(kind.to_owned(), target.to_owned())) {
            Some(&(f, t)) if t > 0 => pct(f as f64 / t as f64),
            _ => "-".into(),
        }
    };
    Ok(Table {
        name: "table2".into(),
        header: ["outliers", "cae_flagged", "outlier11_flagged"]
            .map(String::from)
            .to_vec(),
        rows: order
            .iter()
            .map(|k| vec![k.clone(), cell(k, "cae"), cell(k, "outlier11")])
            .collect(),
    })
}

pub const TABLE3_HEADER: &str = "attack,id,true,fooled,cae_wrong,lcae_missing,nlabels,at_wrong";

fn agg_table3(raw: &str) -> anyhow::Result<Table> {
    let rows = parse(raw, TABLE3_HEADER)?;
    struct Cell {
        total: usize,
        fooled: usize,
        cae_wrong: usize,
        lcae_missing: usize,
        nlabels: usize,
        at_wrong: usize,
    }
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, Cell> = BTreeMap::new();
    for r in &rows {
        let attack = r[0].clone();
        if !order.contains(&attack) {
            order.push(attack.clone());
        }
        let c = acc.entry(attack).or_insert(Cell {
            total: 0,
            fooled: 0,
            cae_wrong: 0,
            lcae_missing: 0,
            nlabels: 0,
            at_wrong: 0,
        });
        c.total += 1;
        let fooled = field::<u8>(r, 3)? == 1;
        if fooled {
            c.fooled += 1;
            if field::<u8>(r, 4)? == 1 {
                c.cae_wrong += 1;
            }
            if field::<u8>(r, 5)? == 1 {
                c.lcae_missing += 1;
            }
        }
        c.nlabels += field::<usize>(r, 6)?;
        if field::<u8>(r, 7)? == 1 {
            c.at_wrong += 1;
        }
    }
    Ok(Table {
        name: "table3".into(),
        header: [
            "attack",
            "at_rate",
            "cae_rate",
            "lcae_rate",
            "mean_nlabels",
            "fooled_rate",
        ]
        .map(String::from)
        .to_vec(),
        rows: order
            .iter()
            .map(|a| {
                let c = &acc[a];
                let n = c.total as f64;
                // The two-factor rates: fooled fraction times the
                // conditional defeat fraction equals defeats over all.
                vec![
                    a.clone(),
                    pct(c.at_wrong as f64 / n),
                    pct(c.cae_wrong as f64 / n),
                    pct(c.lcae_missing as f64 / n),
                    format!("{:.2}", c.nlabels as f64 / n),
                    pct(c.fooled as f64 / n),
                ]
            })
            .collect(),
    })
}

pub const TABLE5_HEADER: &str = "id,list_size";

fn agg_table5(raw: &str) -> anyhow::Result<Table> {
    let rows = parse(raw, TABLE5_HEADER)?;
    let sizes: Vec<usize> = rows
        .iter()
        .map(|r| field::<usize>(r, 1))
        .collect::<Result<_, _>>()?;
    let max = sizes.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &s in &sizes {
        counts[s] += 1;
    }
    Ok(Table {
        name: "table5".into(),
        header: ["list_size", "count"].map(String::from).to_vec(),
        rows: counts
            .iter()
            .enumerate()
            .map(|(s, &c)| vec![s.to_string(), c.to_string()])
            .collect(),
    })
}

pub const TABLE8_HEADER: &str = "kind,id,p_outlier";

fn agg_table8(raw: &str) -> anyhow::Result<Table> {
    let rows = parse(raw, TABLE8_HEADER)?;
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for r in &rows {
        let kind = r[0].clone();
        if !order.contains(&kind) {
            order.push(kind.clone());
        }
        let p: f64 = field(r, 2)?;
        let e = acc.entry(kind).or_insert((0, 0, 0));
        e.2 += 1;
        if p > 0.5 {
            e.0 += 1;
        }
        if p > 0.8 {
            e.1 += 1;
        }
    }
    Ok(Table {
        name: "table8".into(),
        header: ["outliers", "p_outlier>50%", "p_outlier>80%"]
            .map(String::from)
            .to_vec(),
        rows: order
            .iter()
            .map(|k| {
                let (h, f, t) = acc[k];
                vec![
                    k.clone(),
                    pct(h as f64 / t as f64),
                    pct(f as f64 / t as f64),
                ]
            })
            .collect(),
    })
}

pub const DECOUPLE_HEADER: &str = "id,first,second,emitted,both,one";

fn agg_decouple(raw: &str) -> anyhow::Result<Table> {
    let rows = parse(raw, DECOUPLE_HEADER)?;
    let n = rows.len() as f64;
    let mut both = 0usize;
    let mut one = 0usize;
    for r in &rows {
        if field::<u8>(r, 4)? == 1 {
            both += 1;
        }
        if field::<u8>(r, 5)? == 1 {
            one += 1;
        }
    }
    Ok(Table {
        name: "decouple".into(),
        header: ["samples", "both_found", "at_least_one_found"]
            .map(String::from)
            .to_vec(),
        rows: vec![vec![
            rows.len().to_string(),
            pct(both as f64 / n),
            pct(one as f64 / n),
        ]],
    })
}
