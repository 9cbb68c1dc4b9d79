# Unit tests for the fractional Ornstein-Uhlenbeck toolkit
