# Test package initialization\n