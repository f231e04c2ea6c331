# refocus/core/report.py
from typing import Dict, List

from refocus.models.enums import VerifyScope
from refocus.models.schemas import CheckResult
from refocus.utils import VerificationError, logger

class ReportGenerator:
    def generate_report(self, results: List[CheckResult], scope: VerifyScope) -> Dict:
        """Generate the machine-readable verification report."""
        try:
            return {
                "scope": VerifyScope(scope).value,
                "checks": [r.model_dump() for r in results],
                "summary": self._generate_summary(results),
            }
        except Exception as e:
            logger.error(f"Report generation failed: {str(e)}")
            raise VerificationError(f"Failed to generate report: {str(e)}")

    def _generate_summary(self, results: List[CheckResult]) -> Dict:
        """Counts per outcome and per suite, plus the failed assertions."""
        asserted = [r for r in results if r.asserted]
        failed = [r for r in asserted if not r.passed]
        return {
            "total_checks": len(results),
            "asserted": len(asserted),
            "passed": len(asserted) - len(failed),
            "failed": len(failed),
            "informational": len(results) - len(asserted),
            "suite_distribution": self._suite_distribution(results),
            "critical_findings": [f"{r.suite}/{r.name}: {r.measured:.3e} vs {r.tolerance:.3e}" for r in failed],
            "all_passed": not failed,
        }

    def _suite_distribution(self, results: List[CheckResult]) -> Dict[str, int]:
        suites: Dict[str, int] = {}
        for r in results:
            suites[r.suite] = suites.get(r.suite, 0) + 1
        return suites

    def render_table(self, results: List[CheckResult]) -> str:
        """Fixed-width pass/fail table with measured residuals."""
        header = ("suite", "check", "measured", "tolerance", "status")
        rows = [
            (r.suite, r.name, f"{r.measured:.3e}", f"{r.tolerance:.3e}",
             ("PASS" if r.passed else "FAIL") if r.asserted else ("info" if r.passed else "info*"))
            for r in results
        ]
        widths = [max(len(str(row[i])) for row in [header] + rows) for i in range(len(header))]
        lines = ["  ".join(str(cell).ljust(w) for cell, w in zip(header, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines.extend("  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)) for row in rows)
        summary = self._generate_summary(results)
        lines.append("")
        lines.append(f"{summary['passed']}/{summary['asserted']} assertions passed, "
                     f"{summary['informational']} informational")
        return "\n".join(lines)
