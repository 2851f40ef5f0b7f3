"""Market timing constants for the German hourly continuous intraday market."""
import datetime as dt

# Simulation window: 31 five-minute steps from 185 to 30 minutes before delivery.
T_STEPS = 31
BUCKET_MINUTES = 5
WINDOW_END_MINUTES = 30
WINDOW_START_MINUTES = WINDOW_END_MINUTES + T_STEPS * BUCKET_MINUTES  # 185

# Hourly products open for trading at 15:00 on the day before delivery.
SESSION_OPEN_HOUR = 15

# Day-ahead order book gate closure (d-1, 12:00).
DA_GATE_HOUR = 12

ID_PRICE_MIN = -9999.0
ID_PRICE_MAX = 9999.0
DA_PRICE_MIN = -500.0
DA_PRICE_MAX = 3000.0

VOLUME_TICK = 0.1
PRICE_TICK = 0.01

# Cross-border shared order books close 60 minutes before delivery: steps 26..31.
SIDC_GO_LIVE = dt.date(2018, 6, 18)
SIDC_FIRST_STEP = 26

LAG_DEPTH = 12
DEFAULT_Q_GRID = (500.0, 1000.0, 2000.0)
DEFAULT_PATHS = 1000
