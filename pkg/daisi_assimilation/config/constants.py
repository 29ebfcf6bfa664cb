"""
Константы
"""

# Интерполянт
SCORE_DELTA = 1e-4  # Скор не вычисляется при t >= 1 - SCORE_DELTA

# Конечные разности для JVP сетевого дрейфа: h = FD_STEP * (1 + |z|_inf)
FD_STEP = 1e-4

# Метод сопряженных градиентов (MMPS)
CG_TOL = 1e-8
CG_MAX_ITER = 200

# Проверка конечности состояния SDE каждые N шагов
FINITE_CHECK_EVERY = 10

# Блок строк пула при Monte Carlo наведении и при вычислении MMD
POOL_CHUNK = 2048

# Модель Лоренца-63
L63_SIGMA = 10.0
L63_RHO = 28.0
L63_BETA = 8.0 / 3.0
L63_DT = 0.01
L63_X0 = (0.0, 1.0, 1.05)

# Смесь гауссиан тестового стенда (веса, средние, стандартные отклонения)
TESTBED_GMM = ((0.5, 0.3, 0.2), (0.0, 3.0, -2.0), (1.0, 0.5, 0.8))

# Тестовый стенд смеси: функция перевзвешивания прогноза и наблюдение
TESTBED_TILT_MEAN = 0.5
TESTBED_TILT_STD = 1.5
TESTBED_Y = 2.5
TESTBED_SIGMA_OBS = 1.0
TESTBED_N = 10_000

# Масштаб квадратичного оператора наблюдения: (x / 7)^2
SQUARE_SCALE = 7.0

# Бинарные форматы
MODEL_MAGIC = b"DAISIDRF"
ENSEMBLE_MAGIC = b"DAISIENS"
FORMAT_VERSION = 1
