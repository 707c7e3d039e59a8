"""Simple 2-D metrics, admissible products and geodesic machinery."""
from polyinv.geometry.metric import (ConformalProduct, DefinitenessError, DomainError,
                                     MetricField2D, StarDomain, christoffels, disk, unit_disk)
from polyinv.geometry.geodesics import (ChartError, GeodesicPath, InfluxGrid, NonSimpleError,
                                        PolarChart, SimplicityReport, TangencyError, UnitTangent,
                                        exit_batch, exit_times, exp_polar, influx_coords,
                                        influx_grid, polar_coords, polar_coords_batch,
                                        second_fundamental_form, shoot_geodesic,
                                        simplicity_diagnostics)
from polyinv.geometry.gallery import CONTROLS, METRICS, metric_by_name, product_by_name
