"""Binary spatial field reconstruction from compressed sensor decisions."""
