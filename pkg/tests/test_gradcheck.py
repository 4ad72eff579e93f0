import torch

from bitrl.gradcheck import (
    BlockCheck,
    GradCheckReport,
    _check_blocks,
    format_report,
    run_gradcheck,
)


def test_zero_loss_passes_trivially():
    param = torch.nn.Parameter(torch.randn(3, dtype=torch.float64))

    def zero_loss():
        return (param - param).pow(2).sum()

    checks = _check_blocks("zero", zero_loss, zero_loss, {"p": param}, step=1e-5, threshold=1e-4)
    assert checks[0].passed
    assert checks[0].max_rel_error == 0.0


def test_corrupted_backward_sign_fails_on_backward_head():
    report = run_gradcheck(corrupt_backward_sign=True)
    assert not report.passed
    failing = {c.block for c in report.failures()}
    assert any("backward_head" in b for b in failing)
    # the critic loss is untouched by the corruption
    assert all(c.passed for c in report.checks if c.loss_name == "critic_loss")


def test_report_formatting():
    report = GradCheckReport(
        threshold=1e-4,
        checks=[
            BlockCheck("bit_loss", "block_a", 1e-7, True),
            BlockCheck("bit_loss", "block_b", 0.5, False),
        ],
    )
    text = format_report(report)
    assert "FAIL" in text
    assert "block_b" in text
    assert not report.passed
    assert report.max_rel_error == 0.5
