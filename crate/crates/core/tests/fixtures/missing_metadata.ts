@problemName NoClassLabel
@dimensions 1
@equalLength true
@seriesLength 3
@data
1,2,3
