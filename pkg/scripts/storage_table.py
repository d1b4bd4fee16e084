"""Print table sizes for kernel sizes k and channel counts c, plus the reference pipeline's storage."""
from dnlut.geometry import storage_report
from dnlut.lut import human_bytes, lut_size_bytes
from dnlut.pipeline.config import reference_config, spatial_config

rows = [(1, 1, None), (1, 3, None), (2, 1, None), (1, 3, 2), (2, 3, None)]
for k, c, w in rows:
    n = lut_size_bytes(k, c, w)
    name = f"k={k} c={c}" + (f" width={w}" if w else "")
    print(f"{name:<18} {n:>20,d} B  {human_bytes(n):>9}")
print()
for cfg in (reference_config(), spatial_config()):
    print(cfg.name)
    print(storage_report(cfg).text())
