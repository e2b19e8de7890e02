//! Structural validators: receptive field arithmetic and the
//! checkerboard-freedom rules for upsampling stacks.

use super::config::GeneratorConfig;
use crate::error::{Error, Result};

/// Receptive field of a dilated-conv stack: 1 + sum (kernel-1) * dilation.
/// Pointwise (1x1) convolutions contribute nothing.
pub fn receptive_field(kernel: usize, dilations: &[usize]) -> Result<usize> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::InvalidArg {
            op: "receptive_field",
            reason: format!("kernel must be odd, got {kernel}"),
        });
    }
    Ok(1 + dilations.iter().map(|d| (kernel - 1) * d).sum::<usize>())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub rule: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} ({})", self.location, self.rule, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            write!(f, "PASS")
        } else {
            writeln!(f, "FAIL ({} violations)", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
            Ok(())
        }
    }
}

pub const RULE_KERNEL_STRIDE: &str = "kernel not multiple of stride";
pub const RULE_DILATION_POWER: &str = "dilation not power of kernel";

/// Checks the two rules that keep transposed upsampling free of periodic
/// (checkerboard) artifacts:
/// - every upsampling kernel is a whole multiple of its stride;
/// - residual-stack dilations are consecutive powers of the kernel size,
///   so the stack's receptive tree is balanced.
pub fn validate_checkerboard_free(cfg: &GeneratorConfig) -> ValidationReport {
    let mut violations = Vec::new();
    for (i, &ratio) in cfg.upsample_ratios.iter().enumerate() {
        let kernel = cfg.stage_kernel(i);
        if ratio == 0 || !kernel.is_multiple_of(ratio) {
            violations.push(Violation {
                location: format!("upsample stage {i}"),
                rule: RULE_KERNEL_STRIDE,
                detail: format!("kernel {kernel}, stride {ratio}"),
            });
        }
    }
    let mut expect = 1usize;
    for (j, &d) in cfg.resblock_dilations.iter().enumerate() {
        if d != expect {
            violations.push(Violation {
                location: format!("residual stack dilation {j}"),
                rule: RULE_DILATION_POWER,
                detail: format!(
                    "expected {}^{j} = {expect}, got {d}",
                    cfg.resblock_kernel
                ),
            });
        }
        expect = expect.saturating_mul(cfg.resblock_kernel);
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_field_of_default_stack_is_27() {
        assert_eq!(receptive_field(3, &[1, 3, 9]).unwrap(), 27);
        assert_eq!(receptive_field(3, &[1]).unwrap(), 3);
        assert_eq!(receptive_field(3, &[1, 3]).unwrap(), 9);
    }

    #[test]
    fn receptive_field_requires_odd_kernel() {
        assert!(receptive_field(4, &[1]).is_err());
    }

    #[test]
    fn default_config_passes() {
        let report = validate_checkerboard_free(&GeneratorConfig::default());
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn kernel_not_multiple_of_stride_flagged() {
        let cfg = GeneratorConfig {
            upsample_kernels: Some(vec![15, 16, 4, 4]),
            ..GeneratorConfig::default()
        };
        let report = validate_checkerboard_free(&cfg);
        assert!(!report.passed());
        assert_eq!(report.violations[0].rule, RULE_KERNEL_STRIDE);
        assert!(report.violations[0].detail.contains("15"));
    }

    #[test]
    fn non_power_dilations_flagged() {
        let cfg = GeneratorConfig {
            resblock_dilations: vec![1, 2, 4],
            ..GeneratorConfig::default()
        };
        let report = validate_checkerboard_free(&cfg);
        let rules: Vec<&str> = report.violations.iter().map(|v| v.rule).collect();
        assert!(rules.contains(&RULE_DILATION_POWER));
    }
}
