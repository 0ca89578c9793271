//! Parsing of SI-prefixed quantities as they appear on the command line:
//! `5.12mW`, `66MHz`, `19mrad`, `0.077m`, or bare numbers.

/// Parse a value expected in the given unit. Accepts a bare number (taken as
/// the base unit) or a number followed by an optional SI prefix and the unit
/// symbol. Prefixes are case-sensitive: `5mW` is milliwatts, `5MHz` is
/// megahertz.
pub fn parse_quantity(input: &str, unit: &str) -> Result<f64, String> {
    let s = input.trim();
    if s.is_empty() {
        return Err(format!("empty value (expected a number in {unit})"));
    }
    // longest leading slice that parses as a float
    let mut value = None;
    let mut rest = "";
    for split in (1..=s.len()).rev() {
        if !s.is_char_boundary(split) {
            continue;
        }
        if let Ok(v) = s[..split].parse::<f64>() {
            value = Some(v);
            rest = &s[split..];
            break;
        }
    }
    let value = value.ok_or_else(|| format!("'{input}' does not start with a number"))?;
    if !value.is_finite() {
        return Err(format!("'{input}' is not finite"));
    }
    if rest.is_empty() {
        return Ok(value);
    }
    let prefix = rest
        .strip_suffix(unit)
        .ok_or_else(|| format!("'{input}' does not end in the expected unit '{unit}'"))?;
    let multiplier = match prefix {
        "" => 1.0,
        "T" => 1e12,
        "G" => 1e9,
        "M" => 1e6,
        "k" => 1e3,
        "m" => 1e-3,
        "u" | "\u{b5}" | "\u{3bc}" => 1e-6,
        "n" => 1e-9,
        "p" => 1e-12,
        "f" => 1e-15,
        other => return Err(format!("unknown SI prefix '{other}' in '{input}'")),
    };
    Ok(value * multiplier)
}

/// Parse `start:step:stop` (each part an SI quantity) into an inclusive grid.
pub fn parse_grid(input: &str, unit: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = input.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("'{input}' is not of the form start:step:stop"));
    }
    let start = parse_quantity(parts[0], unit)?;
    let step = parse_quantity(parts[1], unit)?;
    let stop = parse_quantity(parts[2], unit)?;
    if step <= 0.0 {
        return Err(format!("grid step must be positive in '{input}'"));
    }
    if stop < start {
        return Err(format!("grid stop below start in '{input}'"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 10_000_000 {
        return Err(format!("grid '{input}' has {count} points; refusing"));
    }
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

/// Parse a comma-separated list or a `start:step:stop` range of quantities.
pub fn parse_list_or_grid(input: &str, unit: &str) -> Result<Vec<f64>, String> {
    if input.contains(',') {
        input.split(',').map(|p| parse_quantity(p, unit)).collect()
    } else if input.contains(':') {
        parse_grid(input, unit)
    } else {
        Ok(vec![parse_quantity(input, unit)?])
    }
}
