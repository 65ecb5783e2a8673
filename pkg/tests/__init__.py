# Test package for the DPRP toolkit
