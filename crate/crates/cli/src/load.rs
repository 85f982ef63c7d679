//! Reads the allocation CSV and builds every tier's structure and links.

use std::io::Read;

use decomptab_core::algebra::LabelSet;
use decomptab_core::{
    build_structure, derive_design_function, merge_sources, refine_with_pseudofactors,
    AllocationTable, DesignFunction, ObjectSet, PseudofactorDecl, Structure, StructureError, Tier,
};

use crate::spec::ExperimentSpec;
use crate::CliError;

/// A tier's own objects and factor columns (pseudofactor columns renamed to
/// the pseudofactor), with the map onto it from the observational units.
#[derive(Debug, Clone)]
pub struct LoadedTier {
    pub table: AllocationTable,
    pub from_units: DesignFunction,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    /// One object per CSV row, labelled `r1`, `r2`, … in file order.
    pub rows: AllocationTable,
    pub tiers: Vec<LoadedTier>,
}

/// Parses CSV text whose header names `tier.factor` columns.
pub fn read_csv(reader: impl Read) -> Result<AllocationTable, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Parse(format!("allocation header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut columns: Vec<Vec<u64>> = vec![Vec::new(); headers.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Parse(format!("allocation: {e}")))?;
        for (j, field) in rec.iter().enumerate() {
            let v = field.parse::<u64>().map_err(|_| {
                CliError::Parse(format!(
                    "allocation row {}: `{field}` in column `{}` is not a level",
                    i + 2,
                    headers[j]
                ))
            })?;
            columns[j].push(v);
        }
    }
    let n = columns.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(CliError::Parse("allocation has no rows".into()));
    }
    let objects = ObjectSet {
        id: "rows".into(),
        labels: LabelSet::numbered("r", n),
    };
    Ok(AllocationTable::new(objects, headers.into_iter().zip(columns).collect())?)
}

/// Derives each tier's objects from the rows; the first tier's factors must
/// identify the rows uniquely.
pub fn load_allocation(spec: &ExperimentSpec, rows: AllocationTable) -> Result<Loaded, CliError> {
    let mut tiers = Vec::new();
    for tier in &spec.tiers {
        let keys: Vec<(String, String)> = tier
            .factors
            .iter()
            .map(|f| (tier.column(&f.name), f.name.clone()))
            .collect();
        let attrs: Vec<(String, String)> = tier
            .pseudos
            .iter()
            .map(|p| (p.column.clone(), p.name.clone()))
            .collect();
        for (c, _) in keys.iter().chain(&attrs) {
            if rows.column(c).is_none() {
                return Err(CliError::Parse(format!("allocation has no column `{c}`")));
            }
        }
        let k: Vec<(&str, &str)> = keys.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let a: Vec<(&str, &str)> = attrs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let (objects, table, f) = derive_design_function(&rows, &tier.name, &k, &a)?;
        if tiers.is_empty() && objects.len() != rows.objects.len() {
            return Err(CliError::Structural(format!(
                "{} rows but only {} distinct `{}` units: {}",
                rows.objects.len(),
                objects.len(),
                tier.name,
                StructureError::DuplicateObject(tier.name.clone())
            )));
        }
        tiers.push(LoadedTier { table, from_units: f });
    }
    Ok(Loaded { rows, tiers })
}

/// Structures of every tier with the design function linking each to the
/// previous one.
pub fn build_tiers(spec: &ExperimentSpec, loaded: &Loaded) -> Result<Vec<Tier>, CliError> {
    let mut out: Vec<Tier> = Vec::new();
    for (k, (tier, lt)) in spec.tiers.iter().zip(&loaded.tiers).enumerate() {
        let base = tier.base_diagram()?;
        let decls: Vec<PseudofactorDecl> = tier
            .pseudos
            .iter()
            .map(|p| PseudofactorDecl {
                name: p.name.clone(),
                levels: p.levels,
                refines: p.refines.clone(),
                ancestors: p.under.clone(),
                column: p.name.clone(),
            })
            .collect();
        let checked = refine_with_pseudofactors(&base, &decls, &lt.table)?;
        let mut structure: Structure = build_structure(&tier.name, &checked, &lt.table)?;
        for m in &tier.merges {
            let names: Vec<&str> = m.sources.iter().map(String::as_str).collect();
            structure = merge_sources(&structure, &names, &m.name)?;
        }
        let link = if k == 0 {
            None
        } else {
            let prev = &loaded.tiers[k - 1].from_units;
            Some(prev.factor_through(&lt.from_units)?)
        };
        out.push(Tier { structure, link });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec_str;
    use std::path::Path;

    const SPEC: &str = "\
tier plots
  factor Blocks 2
  factor Plots 2
  formula Blocks/Plots
tier treatments
  factor T 2
  formula T
chain treatments -> plots
";

    #[test]
    fn builds_linked_tiers() {
        let spec = parse_spec_str(SPEC, Path::new(".")).unwrap();
        let csv = "plots.Blocks,plots.Plots,treatments.T\n2,1,2\n1,1,1\n1,2,2\n2,2,1\n";
        let loaded = load_allocation(&spec, read_csv(csv.as_bytes()).unwrap()).unwrap();
        assert_eq!(loaded.tiers[0].table.objects.labels.labels(), ["1.1", "1.2", "2.1", "2.2"]);
        let tiers = build_tiers(&spec, &loaded).unwrap();
        let link = tiers[1].link.as_ref().unwrap();
        assert_eq!(link.replication(), 2);
        assert_eq!(link.image(0), "1");
        assert_eq!(link.image(1), "2");
        assert_eq!(tiers[0].structure.total_df(), 4);
    }

    #[test]
    fn rejects_bad_tables() {
        let spec = parse_spec_str(SPEC, Path::new(".")).unwrap();
        let dup = "plots.Blocks,plots.Plots,treatments.T\n1,1,1\n1,1,2\n2,1,1\n2,2,2\n";
        assert!(matches!(
            load_allocation(&spec, read_csv(dup.as_bytes()).unwrap()),
            Err(CliError::Structural(_))
        ));
        let missing = "plots.Blocks,plots.Plots\n1,1\n";
        assert!(matches!(
            load_allocation(&spec, read_csv(missing.as_bytes()).unwrap()),
            Err(CliError::Parse(_))
        ));
        assert!(matches!(read_csv("a\nx\n".as_bytes()), Err(CliError::Parse(_))));
        let range = "plots.Blocks,plots.Plots,treatments.T\n1,1,1\n1,2,3\n2,1,1\n2,2,3\n";
        let loaded = load_allocation(&spec, read_csv(range.as_bytes()).unwrap()).unwrap();
        assert!(matches!(build_tiers(&spec, &loaded), Err(CliError::Structural(_))));
        let uneven = "plots.Blocks,plots.Plots,treatments.T\n1,1,1\n1,2,1\n2,1,1\n2,2,2\n";
        let loaded = load_allocation(&spec, read_csv(uneven.as_bytes()).unwrap());
        assert!(matches!(loaded, Err(CliError::Structural(_))));
    }
}
