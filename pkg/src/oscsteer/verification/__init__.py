"""Oracle suite behind the verify command."""

from oscsteer.verification.suite import VerificationReport, VerificationSuite
