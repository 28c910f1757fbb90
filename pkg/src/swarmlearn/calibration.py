"""Published per-dataset summary statistics used to calibrate the generators.

Columns: count, mean, std, min, median, max of the target series
(PV load, gas daily production, DTSM).
"""

from __future__ import annotations

from typing import NamedTuple


class SeriesStats(NamedTuple):
    count: int
    mean: float
    std: float
    min: float
    median: float
    max: float


PV_TABLE = {
    "P1": SeriesStats(6468, 1065.97, 1070.05, 0, 625.25, 3817.00),
    "P2": SeriesStats(6480, 1200.97, 1170.76, 0, 731.17, 4203.00),
    "P3": SeriesStats(6468, 1347.59, 1381.27, 0, 756.86, 5673.50),
    "P4": SeriesStats(6468, 2087.36, 2030.18, 0, 1270.88, 7277.75),
    "P5": SeriesStats(6468, 1753.56, 1656.44, 0, 1149.79, 6130.00),
    "P6": SeriesStats(6480, 2402.42, 2316.47, 0, 1585.69, 8303.25),
    "P7": SeriesStats(6480, 2205.63, 2154.89, 0, 1371.42, 7934.20),
    "P8": SeriesStats(6480, 878.97, 832.93, 0, 571.67, 3206.10),
    "P9": SeriesStats(6480, 4225.77, 4060.18, 0, 2636.25, 14462.50),
    "P10": SeriesStats(6480, 4434.80, 4149.57, 0, 2912.92, 16354.55),
    "P11": SeriesStats(6480, 4057.71, 3826.76, 0, 2578.75, 14140.83),
    "P12": SeriesStats(6468, 988.39, 932.54, 0, 637.33, 3423.58),
    "P13": SeriesStats(6468, 1344.53, 1297.90, 0, 847.55, 4744.75),
    "P14": SeriesStats(6480, 2230.66, 2089.42, 0, 1460.02, 8057.90),
    "P15": SeriesStats(6468, 1860.88, 1726.82, 0, 1237.11, 7006.54),
    "P16": SeriesStats(6480, 2544.77, 2453.21, 0, 1632.63, 8938.13),
    "P17": SeriesStats(6468, 1750.38, 1643.22, 0, 1076.32, 5948.77),
    "P18": SeriesStats(6468, 1859.04, 1702.35, 0, 1277.71, 6168.91),
}

GAS_TABLE = {
    "W1": SeriesStats(3744, 19.10, 9.18, 0.00, 20.24, 61.84),
    "W2": SeriesStats(3735, 37.84, 18.48, 0.00, 43.42, 77.54),
    "W3": SeriesStats(3236, 42.06, 15.37, 0.00, 47.25, 70.03),
    "W4": SeriesStats(3745, 60.56, 25.00, 0.00, 62.30, 110.10),
    "W5": SeriesStats(3745, 53.12, 30.13, 0.00, 56.14, 102.56),
    "W6": SeriesStats(3481, 17.97, 18.65, 0.00, 14.64, 65.50),
    "W7": SeriesStats(3590, 23.52, 17.45, 0.00, 20.31, 73.73),
    "W8": SeriesStats(2700, 8.83, 12.77, 0.00, 0.00, 47.68),
    "W9": SeriesStats(3715, 23.44, 16.19, 0.00, 20.63, 71.95),
    "W10": SeriesStats(3720, 22.22, 13.12, 0.00, 21.84, 65.66),
    "W11": SeriesStats(3720, 22.38, 22.34, 0.00, 19.21, 81.77),
    "W12": SeriesStats(3582, 16.18, 23.99, 0.00, 0.00, 80.75),
    "W13": SeriesStats(3713, 14.68, 17.56, 0.00, 9.14, 60.64),
    "W14": SeriesStats(3718, 18.32, 12.96, 0.00, 20.18, 50.10),
    "W15": SeriesStats(3725, 21.58, 16.40, 0.00, 20.82, 59.74),
    "W16": SeriesStats(440, 15.53, 2.66, 0.00, 15.80, 25.18),
    "W17": SeriesStats(3679, 36.54, 15.31, 0.00, 39.03, 84.93),
    "W18": SeriesStats(3661, 88.09, 33.23, 0.00, 98.63, 136.63),
    "W19": SeriesStats(3685, 48.37, 17.81, 0.00, 53.08, 99.19),
    "W20": SeriesStats(3715, 50.01, 22.49, 0.00, 50.03, 97.03),
    "W21": SeriesStats(3719, 62.95, 26.56, 0.00, 63.72, 113.51),
    "W22": SeriesStats(2875, 15.94, 12.28, 0.00, 19.20, 60.85),
    "W23": SeriesStats(3553, 65.02, 26.96, 0.00, 64.00, 112.11),
    "W24": SeriesStats(3554, 73.75, 34.58, 0.00, 72.61, 133.93),
}

WELLLOG_TABLE = {
    "A1": SeriesStats(2613, 104.50, 16.70, 93.98, 99.95, 200.12),
    "A2": SeriesStats(3731, 104.34, 16.17, 87.63, 99.85, 206.70),
    "A3": SeriesStats(2280, 105.24, 12.65, 92.73, 102.36, 193.64),
    "A4": SeriesStats(5546, 104.07, 14.72, 89.45, 100.00, 202.55),
    "A5": SeriesStats(9186, 120.00, 32.65, 88.71, 107.03, 273.93),
    "A6": SeriesStats(2154, 102.96, 15.04, 89.53, 99.86, 188.60),
    "A7": SeriesStats(3886, 103.39, 15.76, 88.29, 97.21, 210.41),
    "A8": SeriesStats(3677, 102.79, 15.05, 89.82, 98.13, 208.02),
    "A9": SeriesStats(2029, 102.22, 13.78, 89.45, 97.45, 176.00),
    "A10": SeriesStats(1094, 113.59, 15.57, 96.84, 108.09, 181.90),
    "A11": SeriesStats(1901, 108.15, 14.19, 94.15, 103.86, 206.26),
    "A12": SeriesStats(1911, 102.56, 12.92, 89.79, 98.90, 169.61),
    "A13": SeriesStats(1247, 109.92, 13.08, 93.39, 105.68, 184.15),
    "A14": SeriesStats(2108, 104.21, 15.86, 91.82, 100.06, 195.42),
    "A15": SeriesStats(11287, 121.30, 30.14, 75.93, 111.71, 252.34),
    "A16": SeriesStats(3891, 103.13, 16.69, 89.61, 99.13, 211.89),
    "A17": SeriesStats(3729, 103.27, 10.60, 90.28, 100.95, 190.29),
    "A18": SeriesStats(4223, 103.68, 13.64, 89.47, 99.00, 199.23),
    "A19": SeriesStats(17159, 176.99, 80.65, 89.06, 140.45, 498.96),
    "A20": SeriesStats(4024, 102.30, 12.54, 89.36, 98.50, 199.01),
    "A21": SeriesStats(4485, 103.10, 11.84, 91.32, 100.21, 178.65),
    "A22": SeriesStats(3542, 104.57, 10.15, 90.77, 102.39, 188.30),
    "A23": SeriesStats(18132, 174.18, 77.79, 89.18, 136.88, 416.25),
    "A24": SeriesStats(13958, 185.57, 81.97, 84.90, 162.11, 359.63),
    "A25": SeriesStats(18533, 171.47, 79.63, 85.04, 131.50, 406.23),
    "A26": SeriesStats(13186, 139.46, 54.20, 66.41, 116.56, 332.59),
    "A27": SeriesStats(14639, 147.80, 56.27, 78.12, 119.69, 321.81),
    "A28": SeriesStats(2277, 104.46, 16.57, 91.86, 98.97, 193.59),
    "A29": SeriesStats(4222, 102.51, 11.88, 88.73, 99.22, 183.59),
    "A30": SeriesStats(16923, 160.58, 65.80, 76.15, 126.95, 357.58),
    "A31": SeriesStats(2378, 106.43, 17.16, 91.04, 99.58, 186.85),
    "A32": SeriesStats(3918, 104.57, 16.55, 92.01, 99.35, 205.33),
    "A33": SeriesStats(3879, 100.67, 12.52, 80.56, 96.29, 185.24),
    "A34": SeriesStats(4303, 100.88, 12.71, 86.42, 96.95, 196.85),
    "A35": SeriesStats(4085, 103.73, 16.29, 91.13, 98.91, 202.29),
    "A36": SeriesStats(15619, 182.49, 80.77, 90.46, 160.16, 411.64),
}

TABLES = {"PV": PV_TABLE, "Gas": GAS_TABLE, "WellLog": WELLLOG_TABLE}


def lookup(kind: str, label: str) -> SeriesStats:
    return TABLES[kind][label]
