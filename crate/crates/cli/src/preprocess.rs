use std::fs;

use zoomeval::image_ops::{EnhanceParams, PreprocessOp, PreprocessSpec, RasterImage};

use crate::common::CliError;
use crate::PreprocessArgs;

/// Parses `B,C` such as `-32,+32`.
pub fn parse_squint(text: &str) -> Result<(i32, i32), CliError> {
    let bad = || CliError::usage(format!("--squint expects BRIGHTNESS,CONTRAST such as -32,+32; got '{text}'"));
    let (b, c) = text.split_once(',').ok_or_else(bad)?;
    let parse = |s: &str| s.trim().trim_start_matches('+').parse::<i32>().map_err(|_| bad());
    Ok((parse(b)?, parse(c)?))
}

fn build_spec(args: &PreprocessArgs) -> Result<PreprocessSpec, CliError> {
    if let Some(path) = &args.spec {
        let bytes = fs::read(path).map_err(|e| CliError::usage(format!("cannot read spec {}: {e}", path.display())))?;
        let spec: PreprocessSpec =
            serde_json::from_slice(&bytes).map_err(|e| CliError::usage(format!("invalid spec {}: {e}", path.display())))?;
        spec.validate().map_err(CliError::usage)?;
        return Ok(spec);
    }
    let mut chain = Vec::new();
    if let Some(t) = args.zoom_out {
        chain.push(PreprocessOp::ZoomOut { target_long_side: t });
    }
    if let Some(s) = &args.squint {
        let (brightness_delta, contrast_delta) = parse_squint(s)?;
        chain.push(PreprocessOp::Squint { brightness_delta, contrast_delta });
    }
    if args.enhance {
        chain.push(PreprocessOp::Enhance(EnhanceParams::default()));
    }
    if chain.is_empty() {
        return Err(CliError::usage("nothing to do: give --zoom-out, --squint, --enhance or --spec"));
    }
    PreprocessSpec::new(chain).map_err(CliError::usage)
}

pub fn run(args: PreprocessArgs) -> Result<(), CliError> {
    let spec = build_spec(&args)?;
    let input = RasterImage::open(&args.input).map_err(|e| CliError::usage(format!("{}: {e}", args.input.display())))?;
    let output = spec.apply(&input).map_err(|e| CliError::usage(format!("{}: {e}", spec.label())))?;
    output.save(&args.output).map_err(|e| CliError::runtime(format!("{}: {e}", args.output.display())))?;
    println!("{} -> {} ({}x{}, {})", args.input.display(), args.output.display(), output.width(), output.height(), spec.label());
    Ok(())
}
