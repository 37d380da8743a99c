@problemName BadNumber
@dimensions 2
@equalLength true
@seriesLength 3
@classLabel true a b
@data
1,2,3:4,5,6:a
1,2,3:4,five,6:b
